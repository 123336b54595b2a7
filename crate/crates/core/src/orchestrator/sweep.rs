use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::rundir::{read_json, write_json};
use super::OrchestratorError;
use crate::council::{argbest, AnalyzerMetric, AnalyzerSubmodule, Council, MetricProposal};
use crate::dsl::{Aggregator, Direction, MetricProgram, MetricSpec, Schema};
use crate::env::rng;
use crate::table::TrajectoryTable;

/// One persisted selection problem: candidate tables, a council, and the
/// ground-truth metric with its precomputed winner.
#[derive(Debug, Clone)]
pub struct ExperimentSet {
    pub name: String,
    pub tables: BTreeMap<u64, TrajectoryTable>,
    pub council: Council,
    pub truth: MetricProgram,
    pub truth_winner: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthFile {
    winner: u64,
    metric: MetricSpec,
}

impl ExperimentSet {
    pub fn new(
        name: impl Into<String>,
        tables: BTreeMap<u64, TrajectoryTable>,
        council: Council,
        truth: MetricProgram,
    ) -> Result<Self, OrchestratorError> {
        let name = name.into();
        let ids: Vec<u64> = tables.keys().copied().collect();
        let scores = tables
            .values()
            .map(|t| truth.eval(t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| OrchestratorError::Sweep {
                set: name.clone(),
                message: e.to_string(),
            })?;
        let truth_winner = argbest(&ids, &scores, truth.direction)?;
        Ok(Self {
            name,
            tables,
            council,
            truth,
            truth_winner,
        })
    }

    /// Writes `cand<id>.csv`, `council.json` and `truth.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), OrchestratorError> {
        std::fs::create_dir_all(dir)?;
        for (id, t) in &self.tables {
            t.save_csv(&dir.join(format!("cand{id}.csv")))?;
        }
        self.council.save(&dir.join("council.json"))?;
        write_json(
            &dir.join("truth.json"),
            &TruthFile {
                winner: self.truth_winner,
                metric: self.truth.spec(),
            },
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, OrchestratorError> {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let err = |message: String| OrchestratorError::Sweep {
            set: name.clone(),
            message,
        };
        let council = Council::load(&dir.join("council.json"))?;
        let truth: TruthFile = read_json(&dir.join("truth.json"))?;
        let metric = MetricProgram::from_spec(&truth.metric, council.schema()).map_err(|e| err(e.to_string()))?;
        let mut tables = BTreeMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let Some(id) = file
                .strip_prefix("cand")
                .and_then(|r| r.strip_suffix(".csv"))
                .and_then(|r| r.parse::<u64>().ok())
            else {
                continue;
            };
            tables.insert(id, TrajectoryTable::load_csv(&path)?);
        }
        if tables.is_empty() {
            return Err(err("no candidate tables".into()));
        }
        if !tables.contains_key(&truth.winner) {
            return Err(err(format!("truth winner {} has no table", truth.winner)));
        }
        Ok(Self {
            name,
            tables,
            council,
            truth: metric,
            truth_winner: truth.winner,
        })
    }
}

/// Parameters of the synthetic noisy-analyzer sets.
///
/// Each candidate has a true quality `q`. Analyzer `j` metric `k` sees
/// `q + e_jk`, where `e_jk` is an independent Gaussian offset per
/// candidate, so every analyzer is individually unreliable and their
/// errors are independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sets: usize,
    pub candidates: usize,
    pub analyzers: usize,
    pub metrics: usize,
    pub rows: usize,
    /// Standard deviation of each analyzer's offset.
    pub noise: f64,
    /// Standard deviation of per-row jitter around each candidate's value.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sets: 400,
            candidates: 8,
            analyzers: 5,
            metrics: 3,
            rows: 4,
            noise: 0.3,
            jitter: 0.05,
            seed: 7,
        }
    }
}

fn noise_column(j: usize, k: usize) -> String {
    format!("e{j}_{k}")
}

fn synth_schema(cfg: &SynthConfig) -> Schema {
    let mut states = vec!["q".to_string()];
    for j in 1..=cfg.analyzers {
        for k in 1..=cfg.metrics {
            states.push(noise_column(j, k));
        }
    }
    Schema::new(states, Vec::<String>::new()).expect("valid synthetic schema")
}

fn synth_council(cfg: &SynthConfig, schema: &Schema) -> Council {
    let analyzers = (1..=cfg.analyzers)
        .map(|j| AnalyzerSubmodule {
            metrics: (1..=cfg.metrics)
                .map(|k| {
                    let step = format!("s.q + s.{}", noise_column(j, k));
                    AnalyzerMetric {
                        proposal: MetricProposal {
                            description: format!("noisy quality seen by analyzer {j}, view {k}"),
                            rationale: String::new(),
                            criteria: "lower is better".into(),
                        },
                        metric: MetricProgram::compile(&step, Aggregator::Mean, Direction::Minimize, schema)
                            .expect("valid synthetic metric"),
                    }
                })
                .collect(),
        })
        .collect();
    Council::new(schema.clone(), analyzers).expect("non-empty council")
}

/// Deterministic synthetic experiment sets.
pub fn synthesize_sets(cfg: &SynthConfig) -> Result<Vec<ExperimentSet>, OrchestratorError> {
    if cfg.sets == 0 || cfg.candidates == 0 || cfg.analyzers == 0 || cfg.metrics == 0 || cfg.rows == 0 {
        return Err(OrchestratorError::Config("synthetic set counts must be at least 1".into()));
    }
    let schema = synth_schema(cfg);
    let council = synth_council(cfg, &schema);
    let truth = MetricProgram::compile("s.q", Aggregator::Mean, Direction::Minimize, &schema).expect("valid");
    let quality = Normal::new(0.0, 1.0).expect("valid");
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| OrchestratorError::Config(e.to_string()))?;
    let jitter = Normal::new(0.0, cfg.jitter).map_err(|e| OrchestratorError::Config(e.to_string()))?;
    let width = schema.state_dim();
    (0..cfg.sets)
        .map(|s| {
            let mut r = rng::stream("sweep-set", rng::derive_seed(cfg.seed, s as u64));
            let mut tables = BTreeMap::new();
            for id in 1..=cfg.candidates as u64 {
                let q = quality.sample(&mut r);
                let offsets: Vec<f64> = (1..width).map(|_| noise.sample(&mut r)).collect();
                let mut t = TrajectoryTable::with_capacity(schema.clone(), cfg.rows);
                for _ in 0..cfg.rows {
                    let mut state = Vec::with_capacity(width);
                    state.push(q + jitter.sample(&mut r));
                    state.extend(offsets.iter().map(|o| o + jitter.sample(&mut r)));
                    t.push(&state, &[], &state, 0)?;
                }
                tables.insert(id, t);
            }
            ExperimentSet::new(format!("set{s:04}"), tables, council.clone(), truth.clone())
        })
        .collect()
}

pub fn save_sets(sets: &[ExperimentSet], dir: &Path) -> Result<(), OrchestratorError> {
    for set in sets {
        set.save(&dir.join(&set.name))?;
    }
    Ok(())
}

/// Every sub-directory of `dir` holding a `truth.json`, in name order.
pub fn load_sets(dir: &Path) -> Result<Vec<ExperimentSet>, OrchestratorError> {
    let mut dirs: Vec<_> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.join("truth.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(OrchestratorError::EmptyResults(format!(
            "no experiment sets under {}",
            dir.display()
        )));
    }
    dirs.iter().map(|d| ExperimentSet::load(d)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    /// `"analyzers"` when the analyzer count varies, `"metrics"` otherwise.
    pub variant: String,
    pub analyzers: usize,
    pub metrics: usize,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    /// Per-set agreement, in set order.
    pub hits: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub sets: usize,
    pub cells: Vec<AccuracyCell>,
}

impl AccuracyTable {
    pub fn cell(&self, variant: &str, analyzers: usize, metrics: usize) -> Option<&AccuracyCell> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && c.analyzers == analyzers && c.metrics == metrics)
    }

    pub fn render(&self) -> String {
        let mut out = format!("selection accuracy over {} sets\n", self.sets);
        let _ = writeln!(out, "{:<10} {:>9} {:>7} {:>8} {:>9}", "variant", "analyzers", "metrics", "correct", "accuracy");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:<10} {:>9} {:>7} {:>8} {:>9.4}",
                c.variant, c.analyzers, c.metrics, c.correct, c.accuracy
            );
        }
        out
    }
}

fn measure(sets: &[ExperimentSet], variant: &str, m: usize, k: usize) -> Result<AccuracyCell, OrchestratorError> {
    let hits = sets
        .iter()
        .map(|set| {
            let council = set.council.subset(m, k).ok_or_else(|| OrchestratorError::Sweep {
                set: set.name.clone(),
                message: format!("council cannot supply {m} analyzers with {k} metrics"),
            })?;
            Ok(council.select(&set.tables)?.winner == set.truth_winner)
        })
        .collect::<Result<Vec<bool>, OrchestratorError>>()?;
    let correct = hits.iter().filter(|&&h| h).count();
    Ok(AccuracyCell {
        variant: variant.into(),
        analyzers: m,
        metrics: k,
        correct,
        total: hits.len(),
        accuracy: correct as f64 / hits.len() as f64,
        hits,
    })
}

/// Fraction of sets where council selection matches the ground-truth
/// winner. One variant varies the analyzer count with one metric each;
/// the other fixes three analyzers (or fewer if the range ends earlier)
/// and varies the metric count.
pub fn sweep_selection_accuracy(
    sets: &[ExperimentSet],
    analyzers: RangeInclusive<usize>,
    metrics: RangeInclusive<usize>,
) -> Result<AccuracyTable, OrchestratorError> {
    if sets.is_empty() {
        return Err(OrchestratorError::EmptyResults("no experiment sets".into()));
    }
    let mut cells = Vec::new();
    for m in analyzers.clone() {
        cells.push(measure(sets, "analyzers", m, 1)?);
    }
    let fixed = 3.min(*analyzers.end()).max(1);
    for k in metrics {
        cells.push(measure(sets, "metrics", fixed, k)?);
    }
    Ok(AccuracyTable {
        sets: sets.len(),
        cells,
    })
}
