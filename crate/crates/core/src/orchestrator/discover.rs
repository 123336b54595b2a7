use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BackendKind, Mode, RunConfig};
use super::rundir::{write_index, write_json, write_text};
use super::OrchestratorError;
use crate::council::{argbest, build_council, Council, SelectionResult};
use crate::env::{rng, EnvName, EnvSpec, GroundTruthFormula};
use crate::generator::{map_system, CandidateRecord, Generator, StateActionMap, MAX_REPAIR_ATTEMPTS};
use crate::llm::scripted::DemoScript;
use crate::llm::{Gateway, LiveBackend, Transcript};
use crate::table::TrajectoryTable;
use crate::trainer::{random_rollout, rollout, train, Policy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionLog {
    Council(SelectionResult),
    GroundTruth { winner: u64, scores: BTreeMap<u64, f64> },
}

impl SelectionLog {
    pub fn winner(&self) -> u64 {
        match self {
            SelectionLog::Council(r) => r.winner,
            SelectionLog::GroundTruth { winner, .. } => *winner,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: u32,
    pub parent: Option<u64>,
    pub candidates: Vec<CandidateRecord>,
    pub trained: Vec<u64>,
    pub tables: Vec<String>,
    pub selection: SelectionLog,
    pub winner: u64,
    /// Metric listing for the winner, sent with the next mutation request.
    pub feedback: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscoveryResult {
    pub env: EnvName,
    pub mode: Mode,
    pub run: usize,
    pub status: RunStatus,
    pub map: Option<StateActionMap>,
    pub iterations: Vec<IterationLog>,
    pub winner: Option<CandidateRecord>,
    /// Iteration at which the council was built; `None` without one.
    pub council_built_at: Option<u32>,
    pub council: Option<serde_json::Value>,
    pub llm_calls: usize,
    pub call_budget: usize,
}

impl DiscoveryResult {
    pub fn succeeded(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

pub const DISCOVERY_FILE: &str = "discovery.json";

/// Upper bound on LLM calls for one run: mapping (with its re-prompt),
/// per iteration one request plus repairs for every candidate, and per
/// analyzer build attempt two planner turns, a re-prompt, and for every
/// metric the coding attempts plus a direction re-prompt. Analyzer builds
/// may be attempted twice.
pub fn call_budget(config: &RunConfig) -> usize {
    let repairs = (MAX_REPAIR_ATTEMPTS - 1) as usize;
    let generation = config.iterations as usize * (1 + config.candidates * repairs);
    let council = match config.mode {
        Mode::Autonomous => {
            let coder = config.metrics * (crate::council::MAX_CODING_ATTEMPTS as usize + 1);
            2 * config.analyzers * (2 + 1 + coder)
        }
        Mode::WithMetrics => 0,
    };
    2 + generation + council
}

/// Seed of the scripted backend for run `run`.
pub fn demo_run_seed(run: usize) -> u64 {
    rng::derive_seed(rng::label_hash("demo-run"), run as u64)
}

fn transcript_path(base: &Path, run: usize) -> PathBuf {
    if base.is_dir() {
        let nested = base.join(format!("run{run}")).join("transcript.jsonl");
        if nested.exists() {
            return nested;
        }
        return base.join(format!("run{run}.jsonl"));
    }
    base.to_path_buf()
}

/// Recording gateway for run `run` built from the backend settings.
pub fn gateway_for_run(config: &RunConfig, run: usize) -> Result<Gateway, OrchestratorError> {
    let model = config.backend.live.model.clone();
    let gw = match config.backend.kind {
        BackendKind::Mock => Gateway::new(
            Arc::new(DemoScript::for_env(config.env, demo_run_seed(run)).into_backend()),
            model,
        ),
        BackendKind::Replay => {
            let base = config
                .backend
                .transcript
                .as_ref()
                .ok_or_else(|| OrchestratorError::Config("replay needs a transcript".into()))?;
            let path = transcript_path(base, run);
            let t = Transcript::load(&path).map_err(|e| OrchestratorError::Transcript {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            Gateway::replay(&t, model)
        }
        BackendKind::Live => Gateway::new(Arc::new(LiveBackend::from_env(config.backend.live.clone())?), model),
    };
    Ok(gw.recording())
}

fn describe_ground_truth(env: &EnvSpec) -> String {
    match env.ground_truth.formula {
        GroundTruthFormula::MeanSquaredAngle => "mean squared pole angle".into(),
        GroundTruthFormula::MeanDistanceToOrigin => "mean distance to the target".into(),
        GroundTruthFormula::MeanForwardVelocity => "mean forward velocity".into(),
        GroundTruthFormula::DrawerOpenFraction { threshold_millis } => format!(
            "fraction of steps with the drawer open at least {}",
            f64::from(threshold_millis) / 1000.0
        ),
    }
}

struct Run<'a> {
    config: &'a RunConfig,
    env: EnvSpec,
    gateway: &'a Gateway,
    dir: PathBuf,
    result: DiscoveryResult,
}

impl Run<'_> {
    fn table_name(&self, id: u64, iteration: u32) -> String {
        format!("cand{id}_iter{iteration}_select_seed{}.csv", self.config.train_seed)
    }

    fn train_all(
        &self,
        records: &[CandidateRecord],
    ) -> Vec<(u64, Policy, TrajectoryTable)> {
        let trainer = self.config.trainer_config().with_seed(self.config.train_seed);
        records
            .par_iter()
            .filter_map(|r| r.program.as_ref().map(|p| (r.id, p)))
            .map(|(id, program)| {
                let policy = train(&self.env, program, &trainer).expect("trainer config validated");
                let table = rollout(&self.env, &policy, self.config.selection_episodes, self.config.train_seed);
                (id, policy, table)
            })
            .collect()
    }

    fn iterate(
        &mut self,
        iteration: u32,
        generator: &mut Generator,
        council: &mut Option<Council>,
        sample: &TrajectoryTable,
    ) -> Result<(), OrchestratorError> {
        let cfg = self.config;
        let previous = self.result.iterations.last();
        let (records, parent) = match previous {
            None => (
                generator.propose_initial(self.gateway, &self.env.description, &self.env.objective, cfg.candidates)?,
                None,
            ),
            Some(prev) => {
                let best = prev
                    .candidates
                    .iter()
                    .find(|c| c.id == prev.winner)
                    .expect("winner is among the candidates")
                    .clone();
                let feedback = prev.feedback.clone();
                (
                    generator.mutate_best(self.gateway, &best, &feedback, cfg.candidates, iteration)?,
                    Some(best.id),
                )
            }
        };
        for r in &records {
            write_text(&self.dir.join("candidates").join(format!("cand{}.txt", r.id)), &r.source_text)?;
        }
        let trained = self.train_all(&records);
        let map_schema = generator.map().schema.clone();
        let mut env_tables = BTreeMap::new();
        let mut mapped_tables = BTreeMap::new();
        let mut names = Vec::new();
        for (id, policy, table) in trained {
            let name = self.table_name(id, iteration);
            let mapped = table.relabel(map_schema.clone())?;
            mapped.save_csv(&self.dir.join("tables").join(&name))?;
            write_json(&self.dir.join("policies").join(format!("cand{id}.json")), &policy)?;
            names.push(name);
            mapped_tables.insert(id, mapped);
            env_tables.insert(id, table);
        }
        let ids: Vec<u64> = env_tables.keys().copied().collect();

        let (selection, feedback) = match cfg.mode {
            Mode::Autonomous => {
                if council.is_none() {
                    let built = build_council(
                        self.gateway,
                        &self.env.description,
                        &self.env.objective,
                        generator.map(),
                        cfg.analyzers,
                        cfg.metrics,
                        sample,
                    )?;
                    built.save(&self.dir.join("council.json"))?;
                    self.result.council_built_at = Some(iteration);
                    self.result.council = serde_json::from_str(&built.to_json()).ok();
                    *council = Some(built);
                }
                let c = council.as_ref().expect("built above");
                let cube = c.score(&mapped_tables)?;
                let sel = c.select_scored(&ids, &cube)?;
                let column = ids.iter().position(|&i| i == sel.winner).expect("winner has a table");
                (SelectionLog::Council(sel), c.feedback(&cube, column))
            }
            Mode::WithMetrics => {
                let scores: BTreeMap<u64, f64> = env_tables
                    .iter()
                    .map(|(&id, t)| Ok((id, self.env.ground_truth(t)?)))
                    .collect::<Result<_, OrchestratorError>>()?;
                let values: Vec<f64> = scores.values().copied().collect();
                let winner = argbest(&ids, &values, self.env.ground_truth.direction)?;
                let feedback = format!(
                    "  ground truth ({}; {}): {}\n",
                    describe_ground_truth(&self.env),
                    self.env.ground_truth.direction,
                    scores[&winner]
                );
                (SelectionLog::GroundTruth { winner, scores }, feedback)
            }
        };
        write_json(&self.dir.join("selection").join(format!("iter{iteration}.json")), &selection)?;
        let winner = selection.winner();
        self.result.iterations.push(IterationLog {
            iteration,
            parent,
            candidates: records,
            trained: ids,
            tables: names,
            selection,
            winner,
            feedback,
        });
        Ok(())
    }

    fn execute(&mut self) -> Result<(), OrchestratorError> {
        let cfg = self.config;
        write_text(&self.dir.join("config.toml"), &cfg.to_toml())?;
        let map = map_system(
            self.gateway,
            &self.env.description,
            self.env.state_dim(),
            self.env.action_dim(),
        )?;
        write_json(&self.dir.join("mapping.json"), &map)?;
        self.result.map = Some(map.clone());
        let sample = random_rollout(&self.env, cfg.sample_episodes, cfg.sample_steps, cfg.train_seed);
        sample
            .relabel(map.schema.clone())?
            .save_csv(&self.dir.join("tables").join(format!("sample_random_seed{}.csv", cfg.train_seed)))?;
        let mut generator = Generator::new(map, &sample)?;
        let mut council = None;
        for iteration in 1..=cfg.iterations {
            self.iterate(iteration, &mut generator, &mut council, &sample)?;
        }
        let last = self.result.iterations.last().expect("iterations >= 1");
        self.result.winner = last.candidates.iter().find(|c| c.id == last.winner).cloned();
        Ok(())
    }
}

/// One full discovery run written to `config.run_dir(run)`. On error the
/// partial log is still written and the error returned.
pub fn discover(config: &RunConfig, run: usize, gateway: &Gateway) -> Result<DiscoveryResult, OrchestratorError> {
    config.validate()?;
    let env = EnvSpec::builtin(config.env)?;
    let dir = config.run_dir(run);
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    let mut state = Run {
        config,
        env,
        gateway,
        dir: dir.clone(),
        result: DiscoveryResult {
            env: config.env,
            mode: config.mode,
            run,
            status: RunStatus::Completed,
            map: None,
            iterations: Vec::new(),
            winner: None,
            council_built_at: None,
            council: None,
            llm_calls: 0,
            call_budget: call_budget(config),
        },
    };
    let outcome = state.execute();
    let mut result = state.result;
    result.llm_calls = gateway.call_count();
    if let Err(e) = &outcome {
        result.status = RunStatus::Failed { message: e.to_string() };
    }
    if let Some(t) = gateway.transcript() {
        t.save(&dir.join("transcript.jsonl"))?;
    }
    write_json(&dir.join(DISCOVERY_FILE), &result)?;
    write_index(&dir)?;
    outcome.map(|_| result)
}

/// Outcome of one run inside a batch.
pub struct RunOutcome {
    pub run: usize,
    pub result: Result<DiscoveryResult, OrchestratorError>,
}

/// `config.runs` independent discoveries; failures are recorded and the
/// batch continues.
pub fn multi_run(config: &RunConfig) -> Vec<RunOutcome> {
    (1..=config.runs)
        .map(|run| {
            let result = gateway_for_run(config, run).and_then(|gw| discover(config, run, &gw));
            if let Err(e) = &result {
                log::warn!("run {run} failed: {e}");
            }
            RunOutcome { run, result }
        })
        .collect()
}
