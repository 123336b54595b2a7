use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::policy::Policy;
use super::{episode_seed, mean_episode_reward};
use crate::dsl::RewardProgram;
use crate::env::{rng, EnvName, EnvSpec};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid train config: {0}")]
pub struct TrainConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub generations: usize,
    pub population: usize,
    pub elite_fraction: f64,
    pub init_std: f64,
    pub std_floor: f64,
    pub episodes_per_eval: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn for_env(env: EnvName) -> Self {
        let generations = match env {
            EnvName::Cartpole | EnvName::Hover3d => 60,
            EnvName::Runner1d => 150,
            EnvName::Drawer1d => 200,
        };
        Self {
            generations,
            population: 64,
            elite_fraction: 0.125,
            init_std: 1.0,
            std_floor: 0.02,
            episodes_per_eval: 4,
            seed: 42,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn elite_count(&self) -> usize {
        (self.population as f64 * self.elite_fraction).floor() as usize
    }

    pub fn validate(&self) -> Result<(), TrainConfigError> {
        let err = |m: &str| Err(TrainConfigError(m.to_string()));
        if self.generations == 0 || self.population == 0 || self.episodes_per_eval == 0 {
            return err("generations, population and episodes_per_eval must be positive");
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return err("elite_fraction must be in (0, 1]");
        }
        if self.elite_count() < 1 {
            return err("population * elite_fraction must be at least 1");
        }
        if !(self.init_std > 0.0 && self.std_floor > 0.0) {
            return err("init_std and std_floor must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    /// Mean training score of the elite set after each generation.
    pub elite_history: Vec<f64>,
}

pub fn train(
    env: &EnvSpec,
    reward: &RewardProgram,
    config: &TrainConfig,
) -> Result<Policy, TrainConfigError> {
    train_with_history(env, reward, config).map(|o| o.policy)
}

/// Cross-entropy search over policy parameters.
///
/// Each generation samples `population` vectors from a diagonal Gaussian,
/// scores them by mean per-step reward on a fixed set of
/// `episodes_per_eval` episodes, and refits mean and std to the elite set.
/// Elites carry over so the elite mean score never decreases. Returns the
/// final mean vector.
pub fn train_with_history(
    env: &EnvSpec,
    reward: &RewardProgram,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainConfigError> {
    config.validate()?;
    let dim = Policy::param_count(env);
    let n_elite = config.elite_count();
    let episode_base = rng::derive_seed(config.seed, rng::label_hash("train-episodes"));
    let seeds: Vec<u64> = (0..config.episodes_per_eval)
        .map(|e| episode_seed(episode_base, e))
        .collect();
    let mut sampler = rng::stream("cem-population", config.seed);

    let mut mean = vec![0.0; dim];
    let mut std = vec![config.init_std; dim];
    let mut elites: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut history = Vec::with_capacity(config.generations);

    let score = |params: &[f64]| -> f64 {
        let policy = Policy::from_params(env, params.to_vec()).unwrap_or_else(|| Policy::zeros(env));
        mean_episode_reward(env, &policy, reward, &seeds)
    };

    for _ in 0..config.generations {
        let samples: Vec<Vec<f64>> = (0..config.population)
            .map(|_| {
                mean.iter()
                    .zip(&std)
                    .map(|(m, s)| {
                        let z: f64 = StandardNormal.sample(&mut sampler);
                        m + s * z
                    })
                    .collect()
            })
            .collect();
        let scores: Vec<f64> = samples.par_iter().map(|p| score(p)).collect();

        let mut pool: Vec<(Vec<f64>, f64)> = std::mem::take(&mut elites);
        pool.extend(samples.into_iter().zip(scores));
        // stable: earlier pool entries win ties
        pool.sort_by(|a, b| b.1.total_cmp(&a.1));
        pool.truncate(n_elite);
        elites = pool;

        for d in 0..dim {
            let m = elites.iter().map(|(p, _)| p[d]).sum::<f64>() / n_elite as f64;
            let var = elites.iter().map(|(p, _)| (p[d] - m).powi(2)).sum::<f64>() / n_elite as f64;
            mean[d] = m;
            std[d] = var.sqrt().max(config.std_floor);
        }
        history.push(elites.iter().map(|(_, s)| s).sum::<f64>() / n_elite as f64);
    }

    let policy = Policy::from_params(env, mean).unwrap_or_else(|| Policy::zeros(env));
    Ok(TrainOutcome {
        policy,
        elite_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::test_parallel;

    fn small(seed: u64) -> TrainConfig {
        TrainConfig {
            generations: 8,
            population: 16,
            elite_fraction: 0.25,
            ..TrainConfig::for_env(EnvName::Cartpole)
        }
        .with_seed(seed)
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::for_env(EnvName::Cartpole);
        assert!(c.validate().is_ok());
        assert_eq!(c.elite_count(), 8);
        c.elite_fraction = 0.01;
        assert!(c.validate().is_err());
        c.elite_fraction = 0.125;
        c.generations = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
        let r = env.baseline_program().clone();
        let a = train(&env, &r, &small(3)).unwrap();
        let b = train(&env, &r, &small(3)).unwrap();
        assert_eq!(a, b);
        let c = train(&env, &r, &small(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn constant_reward_still_trains() {
        let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
        let r = RewardProgram::compile("0.0", &env.schema).unwrap();
        let out = train_with_history(&env, &r, &small(1)).unwrap();
        assert!(out.policy.params().iter().all(|p| p.is_finite()));
        assert!(out.elite_history.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn elite_score_never_decreases() {
        let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
        let r = env.baseline_program().clone();
        let out = train_with_history(&env, &r, &small(9)).unwrap();
        assert!(out.elite_history.windows(2).all(|w| w[1] >= w[0]));
        let (_, mse) = test_parallel(&env, &out.policy, 8, 1);
        assert!(mse.is_finite());
    }
}
