//! Discovery runs, multi-seed evaluation, reporting and the selection
//! accuracy sweep.

pub mod batch;
pub mod config;
pub mod discover;
pub mod evaluate;
pub mod report;
pub mod rundir;
pub mod sweep;

use thiserror::Error;

use crate::council::CouncilError;
use crate::env::EnvError;
use crate::generator::GeneratorError;
use crate::llm::LlmError;
use crate::table::TableError;

pub use batch::{run_batch, BatchOutcome, RunEvaluation, EVALUATION_FILE};
pub use config::{BackendConfig, BackendKind, Mode, RunConfig};
pub use discover::{
    call_budget, demo_run_seed, discover, gateway_for_run, multi_run, DiscoveryResult, IterationLog, RunOutcome,
    RunStatus, SelectionLog, DISCOVERY_FILE,
};
pub use evaluate::{
    build_report, evaluate_candidate, evaluate_program, mean_std, normalize, train_and_test, Evaluation,
    EvaluationReport, SeedAudit, SeedScore,
};
pub use report::{load_evaluations, report, write_report, Summary};
pub use sweep::{
    load_sets, save_sets, sweep_selection_accuracy, synthesize_sets, AccuracyCell, AccuracyTable, ExperimentSet,
    SynthConfig,
};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Council(#[from] CouncilError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("transcript {path}: {message}")]
    Transcript { path: String, message: String },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("baseline score {0} is too close to zero to normalize against")]
    DegenerateBaseline(f64),
    #[error("no results: {0}")]
    EmptyResults(String),
    #[error("experiment set {set}: {message}")]
    Sweep { set: String, message: String },
}
