use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::env::EnvName;
use crate::llm::LiveConfig;
use crate::trainer::{TrainConfig, DEFAULT_TEST_INSTANCES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Council of LLM-built analyzers selects candidates.
    Autonomous,
    /// The environment's ground-truth metric selects candidates.
    WithMetrics,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Autonomous => "autonomous",
            Mode::WithMetrics => "with_metrics",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "autonomous" => Ok(Mode::Autonomous),
            "with_metrics" | "metrics" => Ok(Mode::WithMetrics),
            other => Err(format!("unknown mode '{other}' (use autonomous or with_metrics)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Built-in deterministic script.
    Mock,
    /// Recorded transcript, looked up by request fingerprint.
    Replay,
    /// HTTP chat-completion provider.
    Live,
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mock" => Ok(BackendKind::Mock),
            "replay" => Ok(BackendKind::Replay),
            "live" => Ok(BackendKind::Live),
            other => Err(format!("unknown backend '{other}' (use mock, replay or live)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Replay source: a transcript file used for every run, or a directory
    /// holding `run<k>/transcript.jsonl` or `run<k>.jsonl`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
    /// Model name, endpoint and key variable. The model name is part of
    /// every request fingerprint, so replay must use the recorded one.
    pub live: LiveConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            transcript: None,
            live: LiveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvName,
    pub mode: Mode,
    pub iterations: u32,
    pub candidates: usize,
    pub analyzers: usize,
    pub metrics: usize,
    pub runs: usize,
    pub train_seed: u64,
    pub test_seeds: Vec<u64>,
    pub test_instances: usize,
    /// Post-training rollout episodes per candidate shown to selection.
    pub selection_episodes: usize,
    /// Random-action rollout used by sanity checks.
    pub sample_episodes: usize,
    pub sample_steps: usize,
    pub backend: BackendConfig,
    /// Defaults to the per-environment trainer settings.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trainer: Option<TrainConfig>,
    /// Output root; not part of the run snapshot.
    #[serde(skip_serializing)]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvName::Cartpole,
            mode: Mode::Autonomous,
            iterations: 5,
            candidates: 8,
            analyzers: 3,
            metrics: 1,
            runs: 10,
            train_seed: 42,
            test_seeds: vec![3120, 2190, 6838, 4024],
            test_instances: DEFAULT_TEST_INSTANCES,
            selection_episodes: 8,
            sample_episodes: 8,
            sample_steps: 100,
            backend: BackendConfig::default(),
            trainer: None,
            out: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    pub fn for_env(env: EnvName) -> Self {
        Self {
            env,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, OrchestratorError> {
        let cfg: Self = toml::from_str(text).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Snapshot written into every run directory.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serialisable")
    }

    pub fn trainer_config(&self) -> TrainConfig {
        self.trainer.clone().unwrap_or_else(|| TrainConfig::for_env(self.env))
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let err = |m: String| Err(OrchestratorError::Config(m));
        for (name, v) in [
            ("iterations", self.iterations as usize),
            ("candidates", self.candidates),
            ("analyzers", self.analyzers),
            ("metrics", self.metrics),
            ("runs", self.runs),
            ("test_instances", self.test_instances),
            ("selection_episodes", self.selection_episodes),
            ("sample_episodes", self.sample_episodes),
            ("sample_steps", self.sample_steps),
        ] {
            if v == 0 {
                return err(format!("{name} must be at least 1"));
            }
        }
        if self.test_seeds.is_empty() {
            return err("test_seeds must not be empty".into());
        }
        if self.test_seeds.contains(&self.train_seed) {
            return err(format!("test seeds must not include the train seed {}", self.train_seed));
        }
        self.trainer_config()
            .validate()
            .map_err(|e| OrchestratorError::Config(e.to_string()))?;
        if self.backend.kind == BackendKind::Replay && self.backend.transcript.is_none() {
            return err("replay backend needs a transcript path".into());
        }
        Ok(())
    }

    /// `<out>/<env>/<mode>`.
    pub fn batch_dir(&self) -> PathBuf {
        self.out.join(self.env.as_str()).join(self.mode.as_str())
    }

    /// `<out>/<env>/<mode>/run<k>`, with `k` starting at 1.
    pub fn run_dir(&self, run: usize) -> PathBuf {
        self.batch_dir().join(format!("run{run}"))
    }
}
