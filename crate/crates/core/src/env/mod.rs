//! Built-in control environments.
//!
//! Four deterministic tasks, each shipped as a TOML parameter file plus a
//! plain-text system description under `data/envs/`:
//!
//! | name       | states | actions | horizon | ground truth                    |
//! |------------|--------|---------|---------|---------------------------------|
//! | `cartpole` | 4      | 1       | 300     | mean squared pole angle (min)   |
//! | `hover3d`  | 6      | 3       | 500     | mean distance to origin (min)   |
//! | `runner1d` | 3      | 1       | 900     | mean forward velocity (max)     |
//! | `drawer1d` | 3      | 1       | 500     | fraction of steps open (max)    |

mod dynamics;
pub mod rng;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{Direction, ProgramError, RewardProgram, Schema, SchemaError};
use crate::table::TrajectoryTable;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown environment '{0}' (expected one of cartpole, hover3d, runner1d, drawer1d)")]
    Unknown(String),
    #[error("environment file for '{name}': {message}")]
    Config { name: String, message: String },
    #[error("trajectory table is empty")]
    EmptyTable,
    #[error("table schema does not match environment '{0}'")]
    SchemaMismatch(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("baseline reward: {0}")]
    Baseline(#[from] ProgramError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvName {
    Cartpole,
    Hover3d,
    Runner1d,
    Drawer1d,
}

impl EnvName {
    pub const ALL: [EnvName; 4] = [
        EnvName::Cartpole,
        EnvName::Hover3d,
        EnvName::Runner1d,
        EnvName::Drawer1d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::Cartpole => "cartpole",
            EnvName::Hover3d => "hover3d",
            EnvName::Runner1d => "runner1d",
            EnvName::Drawer1d => "drawer1d",
        }
    }

    fn files(self) -> (&'static str, &'static str) {
        match self {
            EnvName::Cartpole => (
                include_str!("../../data/envs/cartpole.toml"),
                include_str!("../../data/envs/cartpole.txt"),
            ),
            EnvName::Hover3d => (
                include_str!("../../data/envs/hover3d.toml"),
                include_str!("../../data/envs/hover3d.txt"),
            ),
            EnvName::Runner1d => (
                include_str!("../../data/envs/runner1d.toml"),
                include_str!("../../data/envs/runner1d.txt"),
            ),
            EnvName::Drawer1d => (
                include_str!("../../data/envs/drawer1d.toml"),
                include_str!("../../data/envs/drawer1d.txt"),
            ),
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvName {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, EnvError> {
        EnvName::ALL
            .into_iter()
            .find(|e| e.as_str() == s.trim())
            .ok_or_else(|| EnvError::Unknown(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawerParams {
    pub gripper_mass: f64,
    pub drawer_mass: f64,
    pub gripper_damping: f64,
    pub static_friction: f64,
    pub kinetic_friction: f64,
    pub engage_radius: f64,
    pub travel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    Cartpole {
        gravity: f64,
        cart_mass: f64,
        pole_mass: f64,
        pole_half_length: f64,
    },
    Hover {
        gravity: f64,
        mass: f64,
        drag: f64,
    },
    Runner {
        mass: f64,
        drag: f64,
    },
    Drawer(DrawerParams),
}

/// How each environment's external ground-truth score is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruthFormula {
    /// Mean of `(pole_angle - 0)^2`.
    MeanSquaredAngle,
    /// Mean Euclidean distance from `(x, y, z)` to the origin.
    MeanDistanceToOrigin,
    /// Mean of `vx`.
    MeanForwardVelocity,
    /// Mean of `1[drawer_pos >= threshold]`.
    DrawerOpenFraction { threshold_millis: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthMetric {
    pub env: EnvName,
    pub formula: GroundTruthFormula,
    pub direction: Direction,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvFile {
    name: String,
    version: u32,
    horizon: usize,
    dt: f64,
    objective: String,
    baseline_reward: String,
    #[serde(default)]
    success_threshold: Option<f64>,
    states: Vec<StateEntry>,
    actions: Vec<ActionEntry>,
    dynamics: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateEntry {
    name: String,
    init: [f64; 2],
    #[serde(default = "unit_scale")]
    obs_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionEntry {
    name: String,
    bounds: [f64; 2],
}

/// Fully resolved environment description.
#[derive(Debug, Clone)]
pub struct EnvSpec {
    pub name: EnvName,
    pub version: u32,
    pub schema: Schema,
    pub horizon: usize,
    pub dt: f64,
    /// Uniform initial range per state, in schema order.
    pub init: Vec<(f64, f64)>,
    /// Typical magnitude per state; policies divide observations by it.
    pub obs_scale: Vec<f64>,
    /// Inclusive bounds per action, in schema order.
    pub action_bounds: Vec<(f64, f64)>,
    pub dynamics: Dynamics,
    pub objective: String,
    pub description: String,
    pub ground_truth: GroundTruthMetric,
    baseline_source: String,
    baseline: RewardProgram,
}

impl EnvSpec {
    /// Load a built-in environment.
    pub fn builtin(name: EnvName) -> Result<Self, EnvError> {
        let (toml_text, description) = name.files();
        Self::from_parts(name, toml_text, description)
    }

    pub fn by_name(name: &str) -> Result<Self, EnvError> {
        Self::builtin(name.parse()?)
    }

    /// Build from a parameter document and a system description. The
    /// document's `name` must match `name`.
    pub fn from_parts(name: EnvName, toml_text: &str, description: &str) -> Result<Self, EnvError> {
        let cfg_err = |message: String| EnvError::Config {
            name: name.to_string(),
            message,
        };
        let file: EnvFile = toml::from_str(toml_text).map_err(|e| cfg_err(e.to_string()))?;
        if file.name != name.as_str() {
            return Err(cfg_err(format!("file declares name '{}'", file.name)));
        }
        if file.horizon == 0 {
            return Err(cfg_err("horizon must be at least 1".into()));
        }
        if !(file.dt.is_finite() && file.dt > 0.0) {
            return Err(cfg_err("dt must be positive".into()));
        }
        for s in &file.states {
            let [lo, hi] = s.init;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(cfg_err(format!("bad init range for state '{}'", s.name)));
            }
            if !(s.obs_scale.is_finite() && s.obs_scale > 0.0) {
                return Err(cfg_err(format!("obs_scale for state '{}' must be positive", s.name)));
            }
        }
        for a in &file.actions {
            let [lo, hi] = a.bounds;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(cfg_err(format!("bad bounds for action '{}'", a.name)));
            }
        }
        let schema = Schema::new(
            file.states.iter().map(|s| s.name.clone()),
            file.actions.iter().map(|a| a.name.clone()),
        )?;
        let param = |key: &str| -> Result<f64, EnvError> {
            file.dynamics
                .get(key)
                .copied()
                .filter(|v| v.is_finite())
                .ok_or_else(|| cfg_err(format!("missing dynamics parameter '{key}'")))
        };
        let (expected_states, expected_actions) = match name {
            EnvName::Cartpole => (4, 1),
            EnvName::Hover3d => (6, 3),
            EnvName::Runner1d => (3, 1),
            EnvName::Drawer1d => (3, 1),
        };
        if schema.state_dim() != expected_states || schema.action_dim() != expected_actions {
            return Err(cfg_err(format!(
                "expected {expected_states} states and {expected_actions} actions"
            )));
        }
        let dynamics = match name {
            EnvName::Cartpole => Dynamics::Cartpole {
                gravity: param("gravity")?,
                cart_mass: param("cart_mass")?,
                pole_mass: param("pole_mass")?,
                pole_half_length: param("pole_half_length")?,
            },
            EnvName::Hover3d => Dynamics::Hover {
                gravity: param("gravity")?,
                mass: param("mass")?,
                drag: param("drag")?,
            },
            EnvName::Runner1d => Dynamics::Runner {
                mass: param("mass")?,
                drag: param("drag")?,
            },
            EnvName::Drawer1d => Dynamics::Drawer(DrawerParams {
                gripper_mass: param("gripper_mass")?,
                drawer_mass: param("drawer_mass")?,
                gripper_damping: param("gripper_damping")?,
                static_friction: param("static_friction")?,
                kinetic_friction: param("kinetic_friction")?,
                engage_radius: param("engage_radius")?,
                travel: param("travel")?,
            }),
        };
        let ground_truth = GroundTruthMetric {
            env: name,
            formula: match name {
                EnvName::Cartpole => GroundTruthFormula::MeanSquaredAngle,
                EnvName::Hover3d => GroundTruthFormula::MeanDistanceToOrigin,
                EnvName::Runner1d => GroundTruthFormula::MeanForwardVelocity,
                EnvName::Drawer1d => {
                    let t = file
                        .success_threshold
                        .ok_or_else(|| cfg_err("missing success_threshold".into()))?;
                    GroundTruthFormula::DrawerOpenFraction {
                        threshold_millis: (t * 1000.0).round() as u32,
                    }
                }
            },
            direction: match name {
                EnvName::Cartpole | EnvName::Hover3d => Direction::Minimize,
                EnvName::Runner1d | EnvName::Drawer1d => Direction::Maximize,
            },
        };
        let baseline = RewardProgram::compile(&file.baseline_reward, &schema)?;
        Ok(Self {
            name,
            version: file.version,
            schema,
            horizon: file.horizon,
            dt: file.dt,
            init: file.states.iter().map(|s| (s.init[0], s.init[1])).collect(),
            obs_scale: file.states.iter().map(|s| s.obs_scale).collect(),
            action_bounds: file.actions.iter().map(|a| (a.bounds[0], a.bounds[1])).collect(),
            dynamics,
            objective: file.objective,
            description: description.to_string(),
            ground_truth,
            baseline_source: file.baseline_reward,
            baseline,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.schema.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.schema.action_dim()
    }

    /// Sample an initial state. Same `(env, seed)` gives the same state.
    pub fn reset(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng::stream(self.name.as_str(), seed);
        self.init
            .iter()
            .map(|&(lo, hi)| if lo == hi { lo } else { rng.random_range(lo..hi) })
            .collect()
    }

    /// Clip an action into bounds in place.
    pub fn clip_action(&self, action: &mut [f64]) {
        for (a, &(lo, hi)) in action.iter_mut().zip(&self.action_bounds) {
            *a = if a.is_finite() { a.clamp(lo, hi) } else { 0f64.clamp(lo, hi) };
        }
    }

    /// Advance one step. `action` is clipped to bounds first.
    pub fn step(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let mut a = action.to_vec();
        self.clip_action(&mut a);
        let mut next = vec![0.0; state.len()];
        dynamics::step(&self.dynamics, self.dt, state, &a, &mut next);
        next
    }

    /// Allocation-free step; `action` must already be within bounds.
    #[inline]
    pub fn step_into(&self, state: &[f64], action: &[f64], next: &mut [f64]) {
        dynamics::step(&self.dynamics, self.dt, state, action, next);
    }

    /// External score of a rollout table.
    pub fn ground_truth(&self, table: &TrajectoryTable) -> Result<f64, EnvError> {
        ground_truth(self, table)
    }

    /// The environment's default reward, written in the DSL.
    pub fn baseline_program(&self) -> &RewardProgram {
        &self.baseline
    }

    pub fn baseline_source(&self) -> &str {
        &self.baseline_source
    }

    /// Default reward for one transition row.
    pub fn baseline_reward(&self, row: &[f64]) -> f64 {
        self.baseline
            .eval_row(row, &mut crate::dsl::EvalNotes::default())
    }
}

fn column_index(table: &TrajectoryTable, name: &str) -> usize {
    table
        .schema()
        .states()
        .iter()
        .position(|s| s == name)
        .expect("schema checked")
}

/// Ground-truth score of `table` under `env`'s metric, computed directly
/// from the recorded `s.*` columns.
pub fn ground_truth(env: &EnvSpec, table: &TrajectoryTable) -> Result<f64, EnvError> {
    if table.schema() != &env.schema {
        return Err(EnvError::SchemaMismatch(env.name.to_string()));
    }
    if table.is_empty() {
        return Err(EnvError::EmptyTable);
    }
    let n = table.len() as f64;
    let total: f64 = match env.ground_truth.formula {
        GroundTruthFormula::MeanSquaredAngle => {
            let i = column_index(table, "pole_angle");
            let target = 0.0;
            table.rows().map(|r| (r[i] - target) * (r[i] - target)).sum()
        }
        GroundTruthFormula::MeanDistanceToOrigin => {
            let (ix, iy, iz) = (
                column_index(table, "x"),
                column_index(table, "y"),
                column_index(table, "z"),
            );
            table
                .rows()
                .map(|r| (r[ix] * r[ix] + r[iy] * r[iy] + r[iz] * r[iz]).sqrt())
                .sum()
        }
        GroundTruthFormula::MeanForwardVelocity => {
            let i = column_index(table, "vx");
            table.rows().map(|r| r[i]).sum()
        }
        GroundTruthFormula::DrawerOpenFraction { threshold_millis } => {
            let i = column_index(table, "drawer_pos");
            let threshold = f64::from(threshold_millis) / 1000.0;
            table.rows().filter(|r| r[i] >= threshold).count() as f64
        }
    };
    Ok(total / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_with(env: &EnvSpec, states: &[Vec<f64>]) -> TrajectoryTable {
        let mut t = TrajectoryTable::new(env.schema.clone());
        let a = vec![0.0; env.action_dim()];
        for s in states {
            t.push(s, &a, s, 0).unwrap();
        }
        t
    }

    #[test]
    fn all_builtins_load() {
        for name in EnvName::ALL {
            let env = EnvSpec::builtin(name).unwrap();
            assert_eq!(env.name, name);
            assert!(env.description.contains("Observation space"));
            assert!(env.horizon >= 1);
        }
        let horizons: Vec<usize> = EnvName::ALL
            .iter()
            .map(|&n| EnvSpec::builtin(n).unwrap().horizon)
            .collect();
        assert_eq!(horizons, [300, 500, 900, 500]);
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(EnvSpec::by_name("ant"), Err(EnvError::Unknown(_))));
    }

    #[test]
    fn reset_is_deterministic_and_seed_dependent() {
        let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
        assert_eq!(env.reset(7), env.reset(7));
        assert_ne!(env.reset(1), env.reset(2));
    }

    #[test]
    fn cartpole_init_angle_in_range() {
        let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
        for seed in 0..1000 {
            let s = env.reset(seed);
            assert!((-0.1..=0.1).contains(&s[2]), "seed {seed}: {}", s[2]);
            assert!((-0.5..=0.5).contains(&s[0]));
        }
    }

    #[test]
    fn cartpole_equilibrium() {
        let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
        let next = env.step(&[0.0, 0.0, 0.0, 0.0], &[0.0]);
        assert_eq!(next, vec![0.0; 4]);
    }

    #[test]
    fn hover_falls_without_thrust() {
        let env = EnvSpec::builtin(EnvName::Hover3d).unwrap();
        let s = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let next = env.step(&s, &[0.0, 0.0, 0.0]);
        // vz1 = 0 + 0.02 * (-9.81) ; z1 = 1 + 0.02 * vz1
        let vz1 = 0.02 * -9.81;
        assert!((next[5] - vz1).abs() < 1e-15);
        assert!((next[2] - (1.0 + 0.02 * vz1)).abs() < 1e-15);
        assert!(next[2] < 1.0);
    }

    #[test]
    fn runner_reaches_terminal_velocity() {
        let env = EnvSpec::builtin(EnvName::Runner1d).unwrap();
        // drive / drag = 10 / 0.5
        let terminal = 20.0;
        let mut s = vec![0.0, 0.0, 0.0];
        for _ in 0..5000 {
            s = env.step(&s, &[10.0]);
        }
        assert!((s[1] - terminal).abs() < 1e-6, "vx = {}", s[1]);
        assert!(s[2] > 0.0);
        // over-range actions are clipped
        let clipped = env.step(&[0.0, 0.0, 0.0], &[1e6]);
        let exact = env.step(&[0.0, 0.0, 0.0], &[10.0]);
        assert_eq!(clipped, exact);
    }

    #[test]
    fn drawer_opens_when_pushed() {
        let env = EnvSpec::builtin(EnvName::Drawer1d).unwrap();
        let mut s = vec![-0.3, 0.0, 0.0];
        for _ in 0..200 {
            s = env.step(&s, &[5.0]);
        }
        assert!(s[2] >= 0.35, "drawer at {}", s[2]);
        assert!(s[2] <= 0.5);
        // weak force cannot overcome static friction once grasped at rest
        let held = env.step(&[0.0, 0.0, 0.0], &[1.5]);
        assert_eq!(held, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn long_rollouts_are_bit_identical() {
        for name in EnvName::ALL {
            let env = EnvSpec::builtin(name).unwrap();
            let run = || {
                let mut s = env.reset(99);
                let mut rng = rng::stream("actions", 3);
                for _ in 0..1000 {
                    let a: Vec<f64> = env
                        .action_bounds
                        .iter()
                        .map(|&(lo, hi)| rng.random_range(lo..hi))
                        .collect();
                    s = env.step(&s, &a);
                }
                s
            };
            let (a, b) = (run(), run());
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn ground_truth_fixtures() {
        let cp = EnvSpec::builtin(EnvName::Cartpole).unwrap();
        let t = table_with(&cp, &[vec![0.3, 0.0, 0.0, 1.0], vec![-1.0, 0.0, 0.0, 0.0]]);
        assert_eq!(cp.ground_truth(&t).unwrap(), 0.0);

        let dr = EnvSpec::builtin(EnvName::Drawer1d).unwrap();
        let t = table_with(
            &dr,
            &[vec![0.0, 0.0, 0.2], vec![0.0, 0.0, 0.35], vec![0.0, 0.0, 0.4]],
        );
        assert_eq!(dr.ground_truth(&t).unwrap(), 2.0 / 3.0);

        let hv = EnvSpec::builtin(EnvName::Hover3d).unwrap();
        let t = table_with(&hv, &[vec![0.0; 6], vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]]);
        assert_eq!(hv.ground_truth(&t).unwrap(), 0.0);
        let t = table_with(&hv, &[vec![3.0, 4.0, 0.0, 0.0, 0.0, 0.0]]);
        assert_eq!(hv.ground_truth(&t).unwrap(), 5.0);

        let rn = EnvSpec::builtin(EnvName::Runner1d).unwrap();
        let t = table_with(&rn, &[vec![0.0, 1.0, 0.0], vec![0.0, 3.0, 0.0]]);
        assert_eq!(rn.ground_truth(&t).unwrap(), 2.0);

        let empty = TrajectoryTable::new(cp.schema.clone());
        assert!(matches!(cp.ground_truth(&empty), Err(EnvError::EmptyTable)));
    }

    #[test]
    fn directions() {
        let dir = |n| EnvSpec::builtin(n).unwrap().ground_truth.direction;
        assert_eq!(dir(EnvName::Cartpole), Direction::Minimize);
        assert_eq!(dir(EnvName::Hover3d), Direction::Minimize);
        assert_eq!(dir(EnvName::Runner1d), Direction::Maximize);
        assert_eq!(dir(EnvName::Drawer1d), Direction::Maximize);
    }

    #[test]
    fn baseline_rewards() {
        let cp = EnvSpec::builtin(EnvName::Cartpole).unwrap();
        let row = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(cp.baseline_reward(&row), 1.0);

        let hv = EnvSpec::builtin(EnvName::Hover3d).unwrap();
        assert_eq!(hv.baseline_reward(&[0.0; 15]), 0.0);

        let dr = EnvSpec::builtin(EnvName::Drawer1d).unwrap();
        let row = [0.0, 0.0, 0.4, 0.0, 0.0, 0.0, 0.4];
        assert_eq!(dr.baseline_reward(&row), 2.4);

        let rn = EnvSpec::builtin(EnvName::Runner1d).unwrap();
        let row = [0.0, 2.0, 0.0, 10.0, 0.0, 0.0, 0.0];
        assert!((rn.baseline_reward(&row) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn config_errors_are_reported() {
        let (text, desc) = EnvName::Cartpole.files();
        let broken = text.replace("cart_mass = 1.0", "");
        assert!(matches!(
            EnvSpec::from_parts(EnvName::Cartpole, &broken, desc),
            Err(EnvError::Config { .. })
        ));
        assert!(EnvSpec::from_parts(EnvName::Hover3d, text, desc).is_err());
    }
}
