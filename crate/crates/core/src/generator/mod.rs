//! Reward-candidate generation: the mapping agent, zero-shot initial
//! proposals, few-shot elitist mutation and the sanity/repair loop.

mod mapping;
mod sanity;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mapping::{map_system, normalize_name, DimensionNote, StateActionMap};
pub use sanity::{code_blocks, sanity_check, SanityFailure, SanityReport, MAX_REPAIR_ATTEMPTS};

use crate::dsl::{RewardProgram, Schema};
use crate::llm::{ChatMessage, Conversation, Gateway, LlmError, GENERATOR_TEMPERATURE};
use crate::prompts::{self, TemplateError};
use crate::table::TrajectoryTable;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("system description is empty")]
    EmptyDescription,
    #[error("mapping does not match {expected_states} states / {expected_actions} actions: {detail}")]
    MappingMismatch {
        expected_states: usize,
        expected_actions: usize,
        detail: String,
    },
    #[error("all {n} candidates of iteration {iteration} failed sanity checks")]
    AllCandidatesFailed { iteration: u32, n: usize },
    #[error("candidate {0} did not pass sanity and cannot be mutated")]
    UnusableParent(u64),
    #[error("sample table does not match the mapped schema")]
    SampleMismatch,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: u64,
    pub iteration: u32,
    /// Final source text, after any repairs.
    pub source_text: String,
    #[serde(skip)]
    pub program: Option<RewardProgram>,
    pub sanity: SanityReport,
    pub lineage: Option<u64>,
}

impl CandidateRecord {
    pub fn passed(&self) -> bool {
        self.sanity.passed
    }

    /// Rebuild `program` after deserialization.
    pub fn recompile(&mut self, schema: &Schema) -> Result<(), crate::dsl::ProgramError> {
        if self.sanity.passed {
            self.program = Some(RewardProgram::compile(&self.source_text, schema)?);
        }
        Ok(())
    }
}

/// The generation agent. Owns one conversation for the whole run; every
/// proposal and mutation turn extends it. Repairs are side queries on top
/// of the current history and are not kept.
pub struct Generator {
    conversation: Conversation,
    map: StateActionMap,
    sample: TrajectoryTable,
    next_id: u64,
}

impl Generator {
    /// `sample` is a short random rollout; it is relabeled with the mapped
    /// names.
    pub fn new(map: StateActionMap, sample: &TrajectoryTable) -> Result<Self, GeneratorError> {
        let sample = sample
            .relabel(map.schema.clone())
            .map_err(|_| GeneratorError::SampleMismatch)?;
        let system = prompts::GENERATOR_SYSTEM.render(&[(
            "dsl_reference",
            prompts::DSL_REFERENCE.text.trim_end(),
        )])?;
        Ok(Self {
            conversation: Conversation::new("generator", system, GENERATOR_TEMPERATURE),
            map,
            sample,
            next_id: 1,
        })
    }

    pub fn conversation(&self) -> &Conversation {
        &self.conversation
    }

    pub fn map(&self) -> &StateActionMap {
        &self.map
    }

    pub fn propose_initial(
        &mut self,
        gateway: &Gateway,
        system_description: &str,
        task_objective: &str,
        n: usize,
    ) -> Result<Vec<CandidateRecord>, GeneratorError> {
        let n_text = n.to_string();
        let prompt = prompts::GENERATOR_INITIAL.render(&[
            ("system_description", system_description.trim()),
            ("task_objective", task_objective.trim()),
            ("state_action_map", &self.map.render()),
            ("n", &n_text),
        ])?;
        let reply = self.conversation.send(gateway, prompt, Some(1))?;
        self.collect(gateway, &reply, 1, None, n)
    }

    /// Few-shot mutation of the previous winner. `feedback` is the already
    /// formatted metric listing for `best`.
    pub fn mutate_best(
        &mut self,
        gateway: &Gateway,
        best: &CandidateRecord,
        feedback: &str,
        n: usize,
        iteration: u32,
    ) -> Result<Vec<CandidateRecord>, GeneratorError> {
        if !best.passed() {
            return Err(GeneratorError::UnusableParent(best.id));
        }
        let n_text = n.to_string();
        let prompt = prompts::GENERATOR_MUTATE.render(&[
            ("best_code", best.source_text.trim()),
            ("metric_feedback", feedback.trim_end()),
            ("n", &n_text),
        ])?;
        let reply = self.conversation.send(gateway, prompt, Some(iteration))?;
        self.collect(gateway, &reply, iteration, Some(best.id), n)
    }

    fn collect(
        &mut self,
        gateway: &Gateway,
        reply: &str,
        iteration: u32,
        lineage: Option<u64>,
        n: usize,
    ) -> Result<Vec<CandidateRecord>, GeneratorError> {
        let mut blocks = code_blocks(reply).into_iter();
        let mut records = Vec::with_capacity(n);
        for _ in 0..n {
            let id = self.next_id;
            self.next_id += 1;
            let record = match blocks.next() {
                Some(src) => self.check_with_repair(gateway, id, iteration, lineage, src)?,
                None => CandidateRecord {
                    id,
                    iteration,
                    source_text: String::new(),
                    program: None,
                    sanity: SanityReport {
                        passed: false,
                        attempts: 1,
                        failures: vec![(1, SanityFailure::Missing.to_string())],
                    },
                    lineage,
                },
            };
            records.push(record);
        }
        let passed = records.iter().filter(|r| r.passed()).count();
        if passed < n {
            log::info!("iteration {iteration}: {} of {n} candidates failed sanity", n - passed);
        }
        if passed == 0 {
            return Err(GeneratorError::AllCandidatesFailed { iteration, n });
        }
        Ok(records)
    }

    fn check_with_repair(
        &self,
        gateway: &Gateway,
        id: u64,
        iteration: u32,
        lineage: Option<u64>,
        mut source: String,
    ) -> Result<CandidateRecord, GeneratorError> {
        let mut failures = Vec::new();
        let mut extra: Vec<ChatMessage> = Vec::new();
        let mut program = None;
        let mut attempt = 1;
        loop {
            match sanity_check(&source, &self.map.schema, &self.sample) {
                Ok(p) => {
                    program = Some(p);
                    break;
                }
                Err(e) => {
                    let msg = e.to_string();
                    failures.push((attempt, msg.clone()));
                    if attempt >= MAX_REPAIR_ATTEMPTS {
                        break;
                    }
                    let ask = prompts::GENERATOR_REPAIR.render(&[("code", source.trim()), ("error", &msg)])?;
                    extra.push(ChatMessage::user(ask));
                    let fixed =
                        self.conversation
                            .side_query(gateway, "generator-repair", extra.clone(), Some(iteration))?;
                    extra.push(ChatMessage::assistant(fixed.clone()));
                    source = code_blocks(&fixed)
                        .into_iter()
                        .next()
                        .unwrap_or_else(|| fixed.trim().to_string());
                    attempt += 1;
                }
            }
        }
        Ok(CandidateRecord {
            id,
            iteration,
            source_text: source,
            sanity: SanityReport {
                passed: program.is_some(),
                attempts: attempt,
                failures,
            },
            program,
            lineage,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvName, EnvSpec};
    use crate::llm::{MockBackend, Role};
    use crate::trainer::random_rollout;

    fn setup() -> (EnvSpec, TrajectoryTable) {
        let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
        let sample = random_rollout(&env, 2, 20, 3);
        (env, sample)
    }

    fn fenced(codes: &[&str]) -> String {
        codes.iter().map(|c| format!("```\n{c}\n```\n")).collect()
    }

    const GOOD: [&str; 8] = [
        "-(s.pole_angle^2)",
        "1 - abs(s.pole_angle)",
        "-s.pole_angle^2 - 0.1*s.pole_ang_vel^2",
        "-abs(s.cart_pos)",
        "exp(-abs(s.pole_angle))",
        "-(sn.pole_angle^2)",
        "1 - s.pole_angle^2 - 0.01*abs(a.cart_force)",
        "-tanh(abs(s.pole_angle))",
    ];

    #[test]
    fn eight_valid_programs() {
        let (env, sample) = setup();
        let gw = Gateway::mock(MockBackend::queue([fenced(&GOOD)]));
        let mut g = Generator::new(StateActionMap::from_env(&env), &sample).unwrap();
        let recs = g.propose_initial(&gw, &env.description, &env.objective, 8).unwrap();
        assert_eq!(recs.len(), 8);
        assert!(recs.iter().all(|r| r.passed() && r.lineage.is_none() && r.sanity.attempts == 1));
        assert_eq!(recs.iter().map(|r| r.id).collect::<Vec<_>>(), (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn unparsable_program_repaired_on_second_attempt() {
        let (env, sample) = setup();
        let mut codes = GOOD;
        codes[2] = "s.pole_angle +";
        let gw = Gateway::mock(MockBackend::queue([fenced(&codes), fenced(&["-s.pole_angle^2"])]));
        let mut g = Generator::new(StateActionMap::from_env(&env), &sample).unwrap();
        let recs = g.propose_initial(&gw, &env.description, &env.objective, 8).unwrap();
        let r = &recs[2];
        assert!(r.passed());
        assert_eq!(r.sanity.attempts, 2);
        assert_eq!(r.sanity.failures.len(), 1);
        assert!(r.sanity.failures[0].1.contains("parse error"));
        assert_eq!(r.source_text, "-s.pole_angle^2");
        // repairs do not extend the conversation
        assert_eq!(g.conversation().len(), 3);
    }

    #[test]
    fn unknown_identifier_engages_repair_with_validator_message() {
        let (env, sample) = setup();
        let seen = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
        let seen2 = seen.clone();
        let gw = Gateway::mock(MockBackend::responder(move |req| {
            let last = req.messages.last().unwrap().content.clone();
            seen2.lock().unwrap().push((req.context.agent.clone(), last.clone()));
            if req.context.agent == "generator-repair" {
                Some("```\n-s.pole_angle^2\n```".into())
            } else if last.contains("best reward function") {
                Some(fenced(&["-s.tip_height^2", "-s.pole_angle^2"]))
            } else {
                Some(fenced(&GOOD[..2]))
            }
        }));
        let mut g = Generator::new(StateActionMap::from_env(&env), &sample).unwrap();
        let recs = g.propose_initial(&gw, &env.description, &env.objective, 2).unwrap();
        let len_after_first = g.conversation().len();
        let muts = g.mutate_best(&gw, &recs[0], "  analyzer 1: 0.1", 2, 2).unwrap();
        assert!(muts.iter().all(|r| r.lineage == Some(recs[0].id) && r.iteration == 2));
        assert_eq!(muts[0].sanity.attempts, 2);
        let log = seen.lock().unwrap();
        let repair = log.iter().find(|(a, _)| a == "generator-repair").unwrap();
        assert!(repair.1.contains("s.tip_height"), "{}", repair.1);
        assert!(g.conversation().len() > len_after_first);
        assert_eq!(g.conversation().messages()[3].role, Role::User);
        assert!(g.conversation().messages()[3].content.contains("-(s.pole_angle^2)"));
    }

    #[test]
    fn all_invalid_is_an_error() {
        let (env, sample) = setup();
        let gw = Gateway::mock(MockBackend::responder(|_| Some("```\n0.0\n```\n```\ns.nope\n```".into())));
        let mut g = Generator::new(StateActionMap::from_env(&env), &sample).unwrap();
        match g.propose_initial(&gw, &env.description, &env.objective, 2) {
            Err(GeneratorError::AllCandidatesFailed { iteration: 1, n: 2 }) => {}
            other => panic!("{other:?}"),
        }
        // 1 proposal + 2 repairs for each of 2 candidates
        assert_eq!(gw.call_count(), 5);
    }

    #[test]
    fn missing_blocks_are_failed_records_not_refilled() {
        let (env, sample) = setup();
        let gw = Gateway::mock(MockBackend::queue([fenced(&GOOD[..3])]));
        let mut g = Generator::new(StateActionMap::from_env(&env), &sample).unwrap();
        let recs = g.propose_initial(&gw, &env.description, &env.objective, 5).unwrap();
        assert_eq!(recs.len(), 5);
        assert_eq!(recs.iter().filter(|r| r.passed()).count(), 3);
        assert!(recs[4].program.is_none());
        assert_eq!(gw.call_count(), 1);
    }

    #[test]
    fn record_round_trips_through_json() {
        let (env, sample) = setup();
        let gw = Gateway::mock(MockBackend::queue([fenced(&GOOD[..1])]));
        let mut g = Generator::new(StateActionMap::from_env(&env), &sample).unwrap();
        let rec = g.propose_initial(&gw, "d", "o", 1).unwrap().remove(0);
        let json = serde_json::to_string(&rec).unwrap();
        let mut back: CandidateRecord = serde_json::from_str(&json).unwrap();
        assert!(back.program.is_none());
        back.recompile(&env.schema).unwrap();
        assert!(back.program.is_some());
    }
}
