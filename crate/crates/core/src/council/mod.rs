//! Evaluation and selection: a council of LLM-built analyzers scores
//! trajectory tables and picks a winner by plurality vote.

mod build;
mod vote;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use build::{code_metric, parse_proposals, plan_metrics, MetricProposal, MAX_CODING_ATTEMPTS};
pub use vote::{argbest, rank, vote, SelectionResult};

use crate::dsl::{Direction, MetricProgram, MetricSpec, ProgramError, Schema};
use crate::env::EnvSpec;
use crate::generator::StateActionMap;
use crate::llm::{Gateway, LlmError};
use crate::prompts::TemplateError;
use crate::table::TrajectoryTable;

#[derive(Debug, Error)]
pub enum CouncilError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("analyzer {analyzer} proposed {found} of {wanted} metrics")]
    EmptyProposal {
        analyzer: usize,
        found: usize,
        wanted: usize,
    },
    #[error("analyzer {analyzer} could not code its metric: {message}")]
    CodingFailed { analyzer: usize, message: String },
    #[error("analyzer {analyzer} failed to build twice: {reason}")]
    CouncilBuildFailed { analyzer: usize, reason: String },
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("sample table does not match the mapped schema")]
    SampleMismatch,
    #[error("metric evaluation failed for candidate {candidate}: {source}")]
    Metric { candidate: u64, source: ProgramError },
    #[error("ground truth failed for candidate {candidate}: {message}")]
    GroundTruth { candidate: u64, message: String },
    #[error("council file: {0}")]
    File(String),
}

/// One measurement of an analyzer: the planner's text and its program.
#[derive(Debug, Clone)]
pub struct AnalyzerMetric {
    pub proposal: MetricProposal,
    pub metric: MetricProgram,
}

/// An admitted analyzer. Votes with its first metric; the others are
/// scored and logged.
#[derive(Debug, Clone)]
pub struct AnalyzerSubmodule {
    pub metrics: Vec<AnalyzerMetric>,
}

impl AnalyzerSubmodule {
    pub fn voting_metric(&self) -> &MetricProgram {
        &self.metrics[0].metric
    }

    pub fn direction(&self) -> Direction {
        self.voting_metric().direction
    }
}

#[derive(Debug, Clone)]
pub struct Council {
    schema: Schema,
    analyzers: Vec<AnalyzerSubmodule>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouncilFile {
    schema: Schema,
    analyzers: Vec<Vec<MetricFile>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricFile {
    proposal: MetricProposal,
    metric: MetricSpec,
}

/// Per-candidate scores: `[analyzer][metric][candidate]`.
pub type ScoreCube = Vec<Vec<Vec<f64>>>;

impl Council {
    /// Every analyzer needs at least one metric on `schema`.
    pub fn new(schema: Schema, analyzers: Vec<AnalyzerSubmodule>) -> Result<Self, CouncilError> {
        if analyzers.is_empty() {
            return Err(CouncilError::File("council has no analyzers".into()));
        }
        for (j, a) in analyzers.iter().enumerate() {
            if a.metrics.is_empty() || a.metrics.iter().any(|m| m.metric.schema() != &schema) {
                return Err(CouncilError::File(format!(
                    "analyzer {} has no metric on the council schema",
                    j + 1
                )));
            }
        }
        Ok(Self { schema, analyzers })
    }

    /// Council of analyzers that each use one fixed metric.
    pub fn from_metrics(schema: Schema, metrics: Vec<MetricProgram>) -> Result<Self, CouncilError> {
        let analyzers = metrics
            .into_iter()
            .map(|metric| AnalyzerSubmodule {
                metrics: vec![AnalyzerMetric {
                    proposal: MetricProposal {
                        description: metric.to_string(),
                        rationale: String::new(),
                        criteria: String::new(),
                    },
                    metric,
                }],
            })
            .collect();
        Self::new(schema, analyzers)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn analyzers(&self) -> &[AnalyzerSubmodule] {
        &self.analyzers
    }

    pub fn len(&self) -> usize {
        self.analyzers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.analyzers.is_empty()
    }

    /// The first `m` analyzers, each cut to its first `k` metrics,
    /// or `None` if the council is too small.
    pub fn subset(&self, m: usize, k: usize) -> Option<Self> {
        if m == 0 || k == 0 || m > self.analyzers.len() {
            return None;
        }
        let analyzers: Option<Vec<AnalyzerSubmodule>> = self.analyzers[..m]
            .iter()
            .map(|a| {
                (a.metrics.len() >= k).then(|| AnalyzerSubmodule {
                    metrics: a.metrics[..k].to_vec(),
                })
            })
            .collect();
        Some(Self {
            schema: self.schema.clone(),
            analyzers: analyzers?,
        })
    }

    pub fn to_json(&self) -> String {
        let file = CouncilFile {
            schema: self.schema.clone(),
            analyzers: self
                .analyzers
                .iter()
                .map(|a| {
                    a.metrics
                        .iter()
                        .map(|m| MetricFile {
                            proposal: m.proposal.clone(),
                            metric: m.metric.spec(),
                        })
                        .collect()
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("serialisable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CouncilError> {
        let file: CouncilFile = serde_json::from_str(text).map_err(|e| CouncilError::File(e.to_string()))?;
        let mut analyzers = Vec::new();
        for metrics in file.analyzers {
            let mut out = Vec::new();
            for m in metrics {
                let metric = MetricProgram::from_spec(&m.metric, &file.schema)
                    .map_err(|e| CouncilError::File(e.to_string()))?;
                out.push(AnalyzerMetric {
                    proposal: m.proposal,
                    metric,
                });
            }
            analyzers.push(AnalyzerSubmodule { metrics: out });
        }
        Self::new(file.schema, analyzers)
    }

    pub fn save(&self, path: &Path) -> Result<(), CouncilError> {
        std::fs::write(path, self.to_json()).map_err(|e| CouncilError::File(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CouncilError> {
        let text = std::fs::read_to_string(path).map_err(|e| CouncilError::File(e.to_string()))?;
        Self::from_json(&text)
    }

    /// Every metric of every analyzer on every table. Tables must carry
    /// the council's schema.
    pub fn score(&self, tables: &BTreeMap<u64, TrajectoryTable>) -> Result<ScoreCube, CouncilError> {
        self.analyzers
            .par_iter()
            .map(|a| {
                a.metrics
                    .iter()
                    .map(|m| {
                        tables
                            .iter()
                            .map(|(&id, t)| {
                                m.metric.eval(t).map_err(|source| CouncilError::Metric {
                                    candidate: id,
                                    source,
                                })
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn select(&self, tables: &BTreeMap<u64, TrajectoryTable>) -> Result<SelectionResult, CouncilError> {
        let cube = self.score(tables)?;
        self.select_scored(tables.keys().copied().collect::<Vec<_>>().as_slice(), &cube)
    }

    /// Vote on precomputed scores from [`Council::score`].
    pub fn select_scored(&self, ids: &[u64], cube: &ScoreCube) -> Result<SelectionResult, CouncilError> {
        let voting: Vec<Vec<f64>> = cube.iter().map(|a| a[0].clone()).collect();
        let directions: Vec<Direction> = self.analyzers.iter().map(|a| a.direction()).collect();
        vote(ids, &voting, &directions)
    }

    /// Metric listing for one candidate, used as mutation feedback.
    pub fn feedback(&self, cube: &ScoreCube, column: usize) -> String {
        let mut out = String::new();
        for (j, a) in self.analyzers.iter().enumerate() {
            for (k, m) in a.metrics.iter().enumerate() {
                out.push_str(&format!(
                    "  analyzer {} metric {} ({}; {}): {}\n",
                    j + 1,
                    k + 1,
                    m.proposal.description,
                    m.metric,
                    cube[j][k][column]
                ));
            }
        }
        out
    }
}

/// Build one analyzer: plan, then code every proposal.
pub fn build_analyzer(
    gateway: &Gateway,
    analyzer: usize,
    system_description: &str,
    objective: &str,
    map: &StateActionMap,
    n_metrics: usize,
    sample: &TrajectoryTable,
) -> Result<AnalyzerSubmodule, CouncilError> {
    let proposals = plan_metrics(gateway, analyzer, system_description, objective, map, n_metrics)?;
    let mut metrics = Vec::with_capacity(proposals.len());
    for proposal in proposals {
        let metric = code_metric(gateway, analyzer, &proposal, map, sample)?;
        metrics.push(AnalyzerMetric { proposal, metric });
    }
    Ok(AnalyzerSubmodule { metrics })
}

/// Build `m` analyzers in sequence. A failed analyzer is retried once;
/// a second failure aborts.
pub fn build_council(
    gateway: &Gateway,
    system_description: &str,
    objective: &str,
    map: &StateActionMap,
    m: usize,
    n_metrics: usize,
    sample: &TrajectoryTable,
) -> Result<Council, CouncilError> {
    let sample = sample
        .relabel(map.schema.clone())
        .map_err(|_| CouncilError::SampleMismatch)?;
    let mut analyzers = Vec::with_capacity(m);
    for j in 1..=m {
        let first = build_analyzer(gateway, j, system_description, objective, map, n_metrics, &sample);
        let built = match first {
            Ok(a) => a,
            Err(e) => {
                log::warn!("analyzer {j} failed ({e}); retrying once");
                build_analyzer(gateway, j, system_description, objective, map, n_metrics, &sample).map_err(
                    |e| CouncilError::CouncilBuildFailed {
                        analyzer: j,
                        reason: e.to_string(),
                    },
                )?
            }
        };
        analyzers.push(built);
    }
    Council::new(map.schema.clone(), analyzers)
}

/// Best candidate under one metric; ties go to the lowest id.
pub fn select_with_metric(
    metric: &MetricProgram,
    tables: &BTreeMap<u64, TrajectoryTable>,
) -> Result<u64, CouncilError> {
    let ids: Vec<u64> = tables.keys().copied().collect();
    let scores = tables
        .iter()
        .map(|(&id, t)| {
            metric
                .eval(t)
                .map_err(|source| CouncilError::Metric { candidate: id, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    argbest(&ids, &scores, metric.direction)
}

/// Best candidate under the environment's ground-truth metric. Tables
/// must use the environment's schema.
pub fn select_with_ground_truth(
    env: &EnvSpec,
    tables: &BTreeMap<u64, TrajectoryTable>,
) -> Result<u64, CouncilError> {
    let ids: Vec<u64> = tables.keys().copied().collect();
    let scores = tables
        .iter()
        .map(|(&id, t)| {
            env.ground_truth(t).map_err(|e| CouncilError::GroundTruth {
                candidate: id,
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    argbest(&ids, &scores, env.ground_truth.direction)
}
