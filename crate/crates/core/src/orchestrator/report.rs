use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::batch::{RunEvaluation, EVALUATION_FILE};
use super::config::Mode;
use super::evaluate::{mean_std, normalize, Evaluation};
use super::rundir::{read_json, write_json, write_text};
use super::OrchestratorError;
use crate::dsl::Direction;
use crate::env::EnvName;

pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub label: String,
    pub pp: f64,
    pub gp_mean: f64,
    pub gp_std: f64,
    pub normalized_pp: f64,
    pub normalized_gp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub env: EnvName,
    pub mode: Mode,
    pub direction: Direction,
    pub baseline: Row,
    pub runs: Vec<Row>,
    /// Run with the best GP mean.
    pub best: Row,
    /// Mean over runs; `gp_std` here is the spread of the per-run GP means.
    pub mean: Row,
    pub mean_pp_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub groups: Vec<GroupSummary>,
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == EVALUATION_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

/// Every `evaluation.json` below `runs_dir`, in path order.
pub fn load_evaluations(runs_dir: &Path) -> Result<Vec<RunEvaluation>, OrchestratorError> {
    let mut paths = Vec::new();
    collect(runs_dir, &mut paths)?;
    paths.iter().map(|p| Ok(read_json(p)?)).collect()
}

fn row(label: String, e: &Evaluation, baseline_gp: f64, direction: Direction) -> Result<Row, OrchestratorError> {
    Ok(Row {
        label,
        pp: e.pp.score,
        gp_mean: e.gp_mean,
        gp_std: e.gp_std,
        normalized_pp: normalize(e.pp.score, baseline_gp, direction)?,
        normalized_gp: normalize(e.gp_mean, baseline_gp, direction)?,
    })
}

fn better(a: f64, b: f64, direction: Direction) -> bool {
    match direction {
        Direction::Maximize => a > b,
        Direction::Minimize => a < b,
    }
}

fn summarize_group(evals: &[&RunEvaluation]) -> Result<GroupSummary, OrchestratorError> {
    let first = evals[0];
    let direction = first.report.direction;
    let baseline = &first.report.baseline;
    let b = baseline.gp_mean;
    let runs = evals
        .iter()
        .map(|e| row(format!("run{}", e.run), &e.report.candidate, b, direction))
        .collect::<Result<Vec<_>, _>>()?;
    let mut best = &runs[0];
    for r in &runs[1..] {
        if better(r.gp_mean, best.gp_mean, direction) {
            best = r;
        }
    }
    let pps: Vec<f64> = runs.iter().map(|r| r.pp).collect();
    let gps: Vec<f64> = runs.iter().map(|r| r.gp_mean).collect();
    let (pp_mean, pp_std) = mean_std(&pps);
    let (gp_mean, gp_std) = mean_std(&gps);
    Ok(GroupSummary {
        env: first.env,
        mode: first.mode,
        direction,
        baseline: row("baseline".into(), baseline, b, direction)?,
        best: Row {
            label: format!("best ({})", best.label),
            ..best.clone()
        },
        mean: Row {
            label: "mean".into(),
            pp: pp_mean,
            gp_mean,
            gp_std,
            normalized_pp: normalize(pp_mean, b, direction)?,
            normalized_gp: normalize(gp_mean, b, direction)?,
        },
        mean_pp_std: pp_std,
        runs,
    })
}

/// Group evaluations by environment and mode and compute the Best and
/// Mean rows of each group.
pub fn summarize(evals: &[RunEvaluation]) -> Result<Summary, OrchestratorError> {
    if evals.is_empty() {
        return Err(OrchestratorError::EmptyResults("no evaluated runs".into()));
    }
    let mut keys: Vec<(EnvName, &str)> = evals.iter().map(|e| (e.env, e.mode.as_str())).collect();
    keys.sort();
    keys.dedup();
    let groups = keys
        .into_iter()
        .map(|(env, mode)| {
            let members: Vec<&RunEvaluation> =
                evals.iter().filter(|e| e.env == env && e.mode.as_str() == mode).collect();
            summarize_group(&members)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Summary { groups })
}

/// Plain-text table with baseline, Best and Mean rows followed by the
/// individual runs.
pub fn render_text(summary: &Summary) -> String {
    let mut out = String::new();
    for g in &summary.groups {
        let _ = writeln!(out, "{} / {} ({}, {} runs)", g.env, g.mode, g.direction, g.runs.len());
        let _ = writeln!(
            out,
            "{:<14} {:>12} {:>27} {:>9} {:>9}",
            "row", "PP", "GP", "norm PP", "norm GP"
        );
        let line = |out: &mut String, r: &Row, pp: String| {
            let gp = format!("{:.4e} ± {:.2e}", r.gp_mean, r.gp_std);
            let _ = writeln!(
                out,
                "{:<14} {:>12} {:>27} {:>+9.4} {:>+9.4}",
                r.label, pp, gp, r.normalized_pp, r.normalized_gp
            );
        };
        line(&mut out, &g.baseline, format!("{:.4e}", g.baseline.pp));
        line(&mut out, &g.best, format!("{:.4e}", g.best.pp));
        line(&mut out, &g.mean, format!("{:.4e}", g.mean.pp));
        for r in &g.runs {
            line(&mut out, r, format!("{:.4e}", r.pp));
        }
        out.push('\n');
    }
    out
}

pub fn write_report(summary: &Summary, out_dir: &Path) -> Result<(), OrchestratorError> {
    write_json(&out_dir.join(SUMMARY_FILE), summary)?;
    write_text(&out_dir.join(REPORT_FILE), &render_text(summary))?;
    Ok(())
}

/// Summarize `evals` into `summary.json` and `report.txt` under `out_dir`.
/// Nothing is written when there is nothing to report.
pub fn report(evals: &[RunEvaluation], out_dir: &Path) -> Result<Summary, OrchestratorError> {
    let summary = summarize(evals)?;
    write_report(&summary, out_dir)?;
    Ok(summary)
}
