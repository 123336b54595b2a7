use serde::{Deserialize, Serialize};

use super::CouncilError;
use crate::dsl::{Aggregator, Direction, MetricProgram};
use crate::generator::StateActionMap;
use crate::llm::{Conversation, Gateway, CODER_TEMPERATURE, PLANNER_TEMPERATURE};
use crate::prompts;
use crate::table::TrajectoryTable;

pub const MAX_CODING_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricProposal {
    pub description: String,
    pub rationale: String,
    pub criteria: String,
}

/// Read `METRIC k:` blocks with their `RATIONALE:` and `CRITERIA:` lines.
/// Unlabelled lines continue the previous field.
pub fn parse_proposals(reply: &str) -> Vec<MetricProposal> {
    #[derive(Clone, Copy)]
    enum Field {
        Description,
        Rationale,
        Criteria,
    }
    let mut out: Vec<MetricProposal> = Vec::new();
    let mut field = None;
    for raw in reply.lines() {
        let line = raw.trim().trim_start_matches(['-', '*', '#']).trim().replace("**", "");
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let upper = line.to_ascii_uppercase();
        if upper.starts_with("METRIC") {
            if let Some((_, rest)) = line.split_once(':') {
                out.push(MetricProposal {
                    description: rest.trim().to_string(),
                    rationale: String::new(),
                    criteria: String::new(),
                });
                field = Some(Field::Description);
                continue;
            }
        }
        let Some(current) = out.last_mut() else { continue };
        let (target, text) = if upper.starts_with("RATIONALE:") {
            (Field::Rationale, &line[10..])
        } else if upper.starts_with("CRITERIA:") {
            (Field::Criteria, &line[9..])
        } else if let Some(f) = field {
            (f, line)
        } else {
            continue;
        };
        field = Some(target);
        let slot = match target {
            Field::Description => &mut current.description,
            Field::Rationale => &mut current.rationale,
            Field::Criteria => &mut current.criteria,
        };
        if !slot.is_empty() {
            slot.push(' ');
        }
        slot.push_str(text.trim());
    }
    out.retain(|p| !p.description.is_empty());
    out
}

/// Two-turn planning chain for analyzer `analyzer` (1-based): behaviour
/// insights first, then proposals with the insights in context.
pub fn plan_metrics(
    gateway: &Gateway,
    analyzer: usize,
    system_description: &str,
    objective: &str,
    map: &StateActionMap,
    n_metrics: usize,
) -> Result<Vec<MetricProposal>, CouncilError> {
    let mut conv = Conversation::new(
        format!("analyzer{analyzer}.planner"),
        prompts::PLANNER_SYSTEM.render(&[])?,
        PLANNER_TEMPERATURE,
    );
    let insights = prompts::PLANNER_INSIGHTS.render(&[
        ("system_description", system_description.trim()),
        ("task_objective", objective.trim()),
        ("state_action_map", &map.render()),
    ])?;
    conv.send(gateway, insights, Some(1))?;
    let n_text = n_metrics.to_string();
    let ask = prompts::PLANNER_PROPOSALS.render(&[("n_metrics", &n_text)])?;
    let mut proposals = parse_proposals(&conv.send(gateway, ask, Some(1))?);
    if proposals.len() < n_metrics {
        let again = prompts::PLANNER_REPROMPT.render(&[("n_metrics", &n_text)])?;
        proposals = parse_proposals(&conv.send(gateway, again, Some(1))?);
    }
    if proposals.len() < n_metrics {
        return Err(CouncilError::EmptyProposal {
            analyzer,
            found: proposals.len(),
            wanted: n_metrics,
        });
    }
    proposals.truncate(n_metrics);
    Ok(proposals)
}

#[derive(Debug, Default)]
struct CoderReply {
    step: Option<String>,
    aggregate: Option<String>,
    direction: Option<String>,
}

fn parse_coder(reply: &str) -> CoderReply {
    let mut out = CoderReply::default();
    for raw in reply.lines() {
        let line = raw.trim().trim_start_matches(['-', '*']).trim().replace("**", "");
        let Some((key, value)) = line.split_once(':') else { continue };
        let value = value.trim().trim_matches('`').trim().to_string();
        if value.is_empty() {
            continue;
        }
        match key.trim().to_ascii_uppercase().as_str() {
            "STEP" => out.step = Some(value),
            "AGGREGATE" | "AGGREGATOR" => out.aggregate = Some(value),
            "DIRECTION" => out.direction = Some(value),
            _ => {}
        }
    }
    out
}

fn check_metric(
    reply: &CoderReply,
    direction: Direction,
    map: &StateActionMap,
    sample: &TrajectoryTable,
) -> Result<MetricProgram, String> {
    let step = reply.step.as_deref().ok_or("no STEP line")?;
    let agg: Aggregator = reply
        .aggregate
        .as_deref()
        .unwrap_or("mean")
        .parse()
        .map_err(|e: String| e)?;
    let metric = MetricProgram::compile(step, agg, direction, &map.schema).map_err(|e| e.to_string())?;
    let v = metric.eval(sample).map_err(|e| e.to_string())?;
    if !v.is_finite() {
        return Err(format!("metric is not finite on the sample ({v})"));
    }
    Ok(metric)
}

/// Translate one proposal into a checked metric program.
pub fn code_metric(
    gateway: &Gateway,
    analyzer: usize,
    proposal: &MetricProposal,
    map: &StateActionMap,
    sample: &TrajectoryTable,
) -> Result<MetricProgram, CouncilError> {
    let system = prompts::CODER_SYSTEM.render(&[("dsl_reference", prompts::DSL_REFERENCE.text.trim_end())])?;
    let mut conv = Conversation::new(format!("analyzer{analyzer}.coder"), system, CODER_TEMPERATURE);
    let ask = prompts::CODER_USER.render(&[
        ("state_action_map", &map.render()),
        ("metric_description", &proposal.description),
        ("rationale", &proposal.rationale),
        ("criteria", &proposal.criteria),
    ])?;
    let mut reply = parse_coder(&conv.send(gateway, ask, Some(1))?);
    let mut direction_asked = false;
    let mut attempt = 1;
    loop {
        if reply.direction.is_none() && !direction_asked {
            direction_asked = true;
            let d = parse_coder(&conv.send(gateway, prompts::CODER_DIRECTION.render(&[])?, Some(1))?);
            reply.direction = d.direction;
            if d.step.is_some() {
                reply.step = d.step;
            }
            if d.aggregate.is_some() {
                reply.aggregate = d.aggregate;
            }
        }
        let Some(dir_text) = reply.direction.clone() else {
            return Err(CouncilError::CodingFailed {
                analyzer,
                message: "no direction given".into(),
            });
        };
        let result = dir_text
            .parse::<Direction>()
            .and_then(|d| check_metric(&reply, d, map, sample));
        match result {
            Ok(metric) => return Ok(metric),
            Err(message) if attempt >= MAX_CODING_ATTEMPTS => {
                return Err(CouncilError::CodingFailed { analyzer, message })
            }
            Err(message) => {
                attempt += 1;
                let fix = prompts::CODER_REPAIR.render(&[("error", &message)])?;
                let next = parse_coder(&conv.send(gateway, fix, Some(1))?);
                reply = CoderReply {
                    step: next.step.or(reply.step),
                    aggregate: next.aggregate.or(reply.aggregate),
                    direction: next.direction.or(reply.direction),
                };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvName, EnvSpec};
    use crate::llm::{MockBackend, Role};
    use crate::trainer::random_rollout;

    fn setup() -> (StateActionMap, TrajectoryTable) {
        let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
        (StateActionMap::from_env(&env), random_rollout(&env, 2, 20, 3))
    }

    const PROPOSAL: &str = "METRIC 1: mean squared pole angle\nRATIONALE: square the angle at every step\nand average\nCRITERIA: lower is better";

    #[test]
    fn parses_proposals_with_continuations() {
        let p = parse_proposals(PROPOSAL);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].description, "mean squared pole angle");
        assert_eq!(p[0].rationale, "square the angle at every step and average");
        assert_eq!(p[0].criteria, "lower is better");
        assert!(parse_proposals("no metrics here").is_empty());
    }

    #[test]
    fn planner_appends_first_turn() {
        let (map, _) = setup();
        let gw = Gateway::mock(MockBackend::responder(|req| {
            if req.messages.len() == 2 {
                Some("The pole must stay near zero angle.".into())
            } else {
                let turn1 = &req.messages[2];
                assert_eq!(turn1.role, Role::Assistant);
                assert_eq!(turn1.content, "The pole must stay near zero angle.");
                Some(PROPOSAL.into())
            }
        }));
        let p = plan_metrics(&gw, 1, "desc", "balance", &map, 1).unwrap();
        assert_eq!(p[0].description, "mean squared pole angle");
    }

    #[test]
    fn too_few_proposals_after_reprompt() {
        let (map, _) = setup();
        let gw = Gateway::mock(MockBackend::queue(["insight", PROPOSAL, PROPOSAL]));
        match plan_metrics(&gw, 2, "d", "o", &map, 2) {
            Err(CouncilError::EmptyProposal { analyzer: 2, found: 1, wanted: 2 }) => {}
            other => panic!("{other:?}"),
        }
        assert_eq!(gw.call_count(), 3);
    }

    fn proposal() -> MetricProposal {
        parse_proposals(PROPOSAL).remove(0)
    }

    #[test]
    fn codes_mean_squared_angle() {
        let (map, sample) = setup();
        let gw = Gateway::mock(MockBackend::queue([
            "STEP: s.pole_angle^2\nAGGREGATE: mean\nDIRECTION: minimize",
        ]));
        let m = code_metric(&gw, 1, &proposal(), &map, &sample).unwrap();
        assert_eq!(m.step_source(), "s.pole_angle^2");
        assert_eq!(m.aggregator, Aggregator::Mean);
        assert_eq!(m.direction, Direction::Minimize);
    }

    #[test]
    fn unknown_identifier_repaired_on_second_attempt() {
        let (map, sample) = setup();
        let gw = Gateway::mock(MockBackend::queue([
            "STEP: s.tip_height^2\nAGGREGATE: mean\nDIRECTION: minimize",
            "STEP: s.pole_angle^2",
        ]));
        let m = code_metric(&gw, 1, &proposal(), &map, &sample).unwrap();
        assert_eq!(m.step_source(), "s.pole_angle^2");
        assert_eq!(gw.call_count(), 2);
    }

    #[test]
    fn missing_direction_reprompts_once() {
        let (map, sample) = setup();
        let gw = Gateway::mock(MockBackend::queue(["STEP: s.pole_angle^2", "DIRECTION: minimize"]));
        assert!(code_metric(&gw, 1, &proposal(), &map, &sample).is_ok());
        let gw = Gateway::mock(MockBackend::queue(["STEP: s.pole_angle^2", "I am not sure"]));
        match code_metric(&gw, 3, &proposal(), &map, &sample) {
            Err(CouncilError::CodingFailed { analyzer: 3, message }) => assert!(message.contains("direction")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn budget_exhaustion() {
        let (map, sample) = setup();
        let bad = "STEP: s.nope\nAGGREGATE: mean\nDIRECTION: minimize";
        let gw = Gateway::mock(MockBackend::queue([bad, bad, bad, bad]));
        assert!(matches!(
            code_metric(&gw, 1, &proposal(), &map, &sample),
            Err(CouncilError::CodingFailed { .. })
        ));
        assert_eq!(gw.call_count(), 3);
    }
}
