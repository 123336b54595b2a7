//! Autonomous reward-function discovery for control tasks.
//!
//! Candidate rewards are written in a small expression language ([`dsl`]),
//! trained with a derivative-free policy search ([`trainer`]) on built-in
//! environments ([`env`]), and judged by a council of LLM-synthesized
//! analyzers ([`council`]). [`orchestrator`] ties the loop together.

pub mod council;
pub mod dsl;
pub mod env;
pub mod generator;
pub mod llm;
pub mod orchestrator;
pub mod prompts;
pub mod table;
pub mod trainer;

pub use dsl::{Direction, Expr, MetricProgram, RewardProgram, Schema};
pub use table::TrajectoryTable;
