use serde::{Deserialize, Serialize};

use super::config::{Mode, RunConfig};
use super::discover::{multi_run, RunOutcome};
use super::evaluate::{build_report, evaluate_program, Evaluation, EvaluationReport};
use super::rundir::{write_index, write_json};
use super::OrchestratorError;
use crate::env::{EnvName, EnvSpec};

pub const EVALUATION_FILE: &str = "evaluation.json";

/// Contents of `evaluation.json` in a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvaluation {
    pub env: EnvName,
    pub mode: Mode,
    pub run: usize,
    pub winner_id: u64,
    pub report: EvaluationReport,
}

pub struct BatchOutcome {
    pub runs: Vec<RunOutcome>,
    pub evaluations: Vec<RunEvaluation>,
    pub baseline: Evaluation,
}

/// `multi_run` followed by PP/GP evaluation of every run's winner. The
/// baseline is evaluated once and shared by all reports.
pub fn run_batch(config: &RunConfig) -> Result<BatchOutcome, OrchestratorError> {
    config.validate()?;
    let env = EnvSpec::builtin(config.env)?;
    let trainer = config.trainer_config();
    let runs = multi_run(config);
    let baseline = evaluate_program(
        &env,
        env.baseline_program(),
        &trainer,
        config.train_seed,
        &config.test_seeds,
        config.test_instances,
    )?;
    let mut evaluations = Vec::new();
    for outcome in &runs {
        let Ok(result) = &outcome.result else { continue };
        let Some(winner) = &result.winner else { continue };
        let mut winner = winner.clone();
        let program = match winner.program.take() {
            Some(p) => p,
            None => {
                let schema = result.map.as_ref().map_or(&env.schema, |m| &m.schema);
                winner.recompile(schema).map_err(|e| OrchestratorError::Config(e.to_string()))?;
                winner.program.take().expect("recompiled")
            }
        };
        let candidate = evaluate_program(
            &env,
            &program,
            &trainer,
            config.train_seed,
            &config.test_seeds,
            config.test_instances,
        )?;
        let evaluation = RunEvaluation {
            env: config.env,
            mode: config.mode,
            run: outcome.run,
            winner_id: winner.id,
            report: build_report(&env, candidate, baseline.clone())?,
        };
        let dir = config.run_dir(outcome.run);
        write_json(&dir.join(EVALUATION_FILE), &evaluation)?;
        write_index(&dir)?;
        evaluations.push(evaluation);
    }
    Ok(BatchOutcome {
        runs,
        evaluations,
        baseline,
    })
}
