use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::dsl::{Direction, RewardProgram};
use crate::env::EnvSpec;
use crate::trainer::{test_parallel, train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub score: f64,
}

/// Ground-truth scores of one reward: PP at the train seed, GP over the
/// unseen seeds. Every score is a fresh train + test at that seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub source: String,
    pub pp: SeedScore,
    pub gp: Vec<SeedScore>,
    pub gp_mean: f64,
    /// Population standard deviation of the GP scores.
    pub gp_std: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedAudit {
    pub pp_seeds: Vec<u64>,
    pub gp_seeds: Vec<u64>,
    pub disjoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub candidate: Evaluation,
    pub baseline: Evaluation,
    pub direction: Direction,
    /// Both normalized scores are relative to the baseline's GP mean.
    pub normalized_pp: f64,
    pub normalized_gp: f64,
    pub seed_audit: SeedAudit,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Train at `seed` and score the policy on `instances` test episodes at
/// the same seed.
pub fn train_and_test(
    env: &EnvSpec,
    program: &RewardProgram,
    trainer: &TrainConfig,
    seed: u64,
    instances: usize,
) -> Result<f64, OrchestratorError> {
    let policy = train(env, program, &trainer.clone().with_seed(seed))
        .map_err(|e| OrchestratorError::Config(e.to_string()))?;
    Ok(test_parallel(env, &policy, instances, seed).1)
}

pub fn evaluate_program(
    env: &EnvSpec,
    program: &RewardProgram,
    trainer: &TrainConfig,
    train_seed: u64,
    test_seeds: &[u64],
    instances: usize,
) -> Result<Evaluation, OrchestratorError> {
    if test_seeds.is_empty() || test_seeds.contains(&train_seed) {
        return Err(OrchestratorError::Config(
            "test seeds must be non-empty and exclude the train seed".into(),
        ));
    }
    let seeds: Vec<u64> = std::iter::once(train_seed).chain(test_seeds.iter().copied()).collect();
    let scores = seeds
        .par_iter()
        .map(|&s| train_and_test(env, program, trainer, s, instances))
        .collect::<Result<Vec<_>, _>>()?;
    let gp: Vec<SeedScore> = test_seeds
        .iter()
        .zip(&scores[1..])
        .map(|(&seed, &score)| SeedScore { seed, score })
        .collect();
    let (gp_mean, gp_std) = mean_std(&gp.iter().map(|s| s.score).collect::<Vec<_>>());
    Ok(Evaluation {
        source: program.source_text().to_string(),
        pp: SeedScore {
            seed: train_seed,
            score: scores[0],
        },
        gp,
        gp_mean,
        gp_std,
    })
}

/// Relative improvement over `baseline`; positive is better in either
/// direction.
pub fn normalize(value: f64, baseline: f64, direction: Direction) -> Result<f64, OrchestratorError> {
    if baseline.abs() < 1e-12 || !baseline.is_finite() {
        return Err(OrchestratorError::DegenerateBaseline(baseline));
    }
    Ok(match direction {
        Direction::Maximize => (value - baseline) / baseline.abs(),
        Direction::Minimize => (baseline - value) / baseline.abs(),
    })
}

pub fn build_report(
    env: &EnvSpec,
    candidate: Evaluation,
    baseline: Evaluation,
) -> Result<EvaluationReport, OrchestratorError> {
    let direction = env.ground_truth.direction;
    let normalized_pp = normalize(candidate.pp.score, baseline.gp_mean, direction)?;
    let normalized_gp = normalize(candidate.gp_mean, baseline.gp_mean, direction)?;
    let pp_seeds = vec![candidate.pp.seed];
    let gp_seeds: Vec<u64> = candidate.gp.iter().map(|s| s.seed).collect();
    let disjoint = !gp_seeds.contains(&candidate.pp.seed)
        && baseline.pp.seed == candidate.pp.seed
        && baseline.gp.iter().map(|s| s.seed).eq(gp_seeds.iter().copied());
    Ok(EvaluationReport {
        candidate,
        baseline,
        direction,
        normalized_pp,
        normalized_gp,
        seed_audit: SeedAudit {
            pp_seeds,
            gp_seeds,
            disjoint,
        },
    })
}

/// Evaluate a candidate and the environment's baseline reward through the
/// same path.
pub fn evaluate_candidate(
    env: &EnvSpec,
    program: &RewardProgram,
    trainer: &TrainConfig,
    train_seed: u64,
    test_seeds: &[u64],
    instances: usize,
) -> Result<EvaluationReport, OrchestratorError> {
    let candidate = evaluate_program(env, program, trainer, train_seed, test_seeds, instances)?;
    let baseline = evaluate_program(env, env.baseline_program(), trainer, train_seed, test_seeds, instances)?;
    build_report(env, candidate, baseline)
}
