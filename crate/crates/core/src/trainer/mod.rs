//! Policy training and trajectory collection.
//!
//! Policies are linear maps from state to action, squashed through `tanh`
//! into the action bounds. Training is a cross-entropy search over the
//! policy parameters, scored by the candidate reward alone.

mod cem;
mod policy;

pub use cem::{train, train_with_history, TrainConfig, TrainConfigError, TrainOutcome};
pub use policy::Policy;

use rand::Rng;

use crate::dsl::{EvalNotes, RewardProgram};
use crate::env::{rng, EnvSpec};
use crate::table::TrajectoryTable;

/// Number of instances used when testing a trained policy.
pub const DEFAULT_TEST_INSTANCES: usize = 128;

/// Seed of the `episode`-th rollout under `seed`.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    rng::derive_seed(seed, episode as u64)
}

/// Roll `policy` out for `n_episodes` full-horizon episodes. Episode `e`
/// starts from `env.reset(episode_seed(seed, e))`.
pub fn rollout(env: &EnvSpec, policy: &Policy, n_episodes: usize, seed: u64) -> TrajectoryTable {
    let mut table = TrajectoryTable::with_capacity(env.schema.clone(), n_episodes * env.horizon);
    let mut action = vec![0.0; env.action_dim()];
    let mut next = vec![0.0; env.state_dim()];
    for e in 0..n_episodes {
        let mut state = env.reset(episode_seed(seed, e));
        for _ in 0..env.horizon {
            policy.act(&state, &mut action);
            env.step_into(&state, &action, &mut next);
            table
                .push(&state, &action, &next, e as u32)
                .expect("environment produced a non-finite state");
            std::mem::swap(&mut state, &mut next);
        }
    }
    table
}

/// Deploy `policy` on `k` independently initialised instances and score
/// the pooled table with the environment's ground-truth metric.
pub fn test_parallel(env: &EnvSpec, policy: &Policy, k: usize, seed: u64) -> (TrajectoryTable, f64) {
    let table = rollout(env, policy, k, seed);
    let score = env
        .ground_truth(&table)
        .expect("rollout table matches its environment and is non-empty");
    (table, score)
}

/// Steps between action changes in [`random_rollout`].
pub const RANDOM_ACTION_HOLD: usize = 20;

/// Short rollout with piecewise-constant uniformly random actions, used to
/// exercise generated programs before they are trusted. Holding each
/// action for [`RANDOM_ACTION_HOLD`] steps lets the state travel further
/// than white-noise actions would.
pub fn random_rollout(env: &EnvSpec, n_episodes: usize, steps: usize, seed: u64) -> TrajectoryTable {
    let steps = steps.min(env.horizon).max(1);
    let mut table = TrajectoryTable::with_capacity(env.schema.clone(), n_episodes * steps);
    let mut rng = rng::stream("random-actions", seed);
    let mut action = vec![0.0; env.action_dim()];
    let mut next = vec![0.0; env.state_dim()];
    for e in 0..n_episodes {
        let mut state = env.reset(episode_seed(seed, e));
        for t in 0..steps {
            if t % RANDOM_ACTION_HOLD == 0 {
                for (a, &(lo, hi)) in action.iter_mut().zip(&env.action_bounds) {
                    *a = rng.random_range(lo..hi);
                }
            }
            env.step_into(&state, &action, &mut next);
            table
                .push(&state, &action, &next, e as u32)
                .expect("environment produced a non-finite state");
            std::mem::swap(&mut state, &mut next);
        }
    }
    table
}

/// Mean per-step reward of `policy` over the episodes started from
/// `seeds`. This is the only signal training sees.
pub fn mean_episode_reward(
    env: &EnvSpec,
    policy: &Policy,
    reward: &RewardProgram,
    seeds: &[u64],
) -> f64 {
    let s = env.state_dim();
    let a = env.action_dim();
    let mut row = vec![0.0; env.schema.row_width()];
    let mut notes = EvalNotes::default();
    let mut total = 0.0;
    for &seed in seeds {
        let init = env.reset(seed);
        row[..s].copy_from_slice(&init);
        for _ in 0..env.horizon {
            let (state, rest) = row.split_at_mut(s);
            let (action, next) = rest.split_at_mut(a);
            policy.act(state, action);
            env.step_into(state, action, next);
            total += reward.eval_row(&row, &mut notes);
            row.copy_within(s + a.., 0);
        }
    }
    let mean = total / (seeds.len() * env.horizon) as f64;
    if mean.is_finite() {
        mean
    } else {
        0.0
    }
}
