use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::Expr;
use super::eval::{eval_bound, EvalNotes};
use super::parser::{parse_expr, ParseError};
use super::schema::Schema;
use super::validate::{validate, ValidationReport};
use crate::table::TrajectoryTable;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProgramError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid program: {0}")]
    Invalid(ValidationReport),
    #[error("program schema does not match table schema")]
    SchemaMismatch,
    #[error("cannot aggregate over an empty table")]
    EmptyTable,
}

/// Expression parsed from text, validated and bound to a schema.
#[derive(Debug, Clone)]
struct Compiled {
    source: String,
    expr: Expr,
    bound: Expr<usize>,
    schema: Schema,
}

impl Compiled {
    fn new(source: &str, schema: &Schema) -> Result<Self, ProgramError> {
        let expr = parse_expr(source)?;
        Self::from_expr(source.to_string(), expr, schema)
    }

    fn from_expr(source: String, expr: Expr, schema: &Schema) -> Result<Self, ProgramError> {
        let report = validate(&expr, schema);
        if !report.is_valid() {
            return Err(ProgramError::Invalid(report));
        }
        let bound = expr
            .try_map_refs(&mut |v| schema.slot(v).ok_or(()))
            .expect("validated refs resolve");
        Ok(Self {
            source,
            expr,
            bound,
            schema: schema.clone(),
        })
    }
}

/// A candidate reward: maps one transition row to a scalar.
#[derive(Debug, Clone)]
pub struct RewardProgram(Compiled);

impl RewardProgram {
    pub fn compile(source: &str, schema: &Schema) -> Result<Self, ProgramError> {
        Compiled::new(source, schema).map(Self)
    }

    pub fn from_expr(expr: Expr, schema: &Schema) -> Result<Self, ProgramError> {
        let text = expr.to_string();
        Compiled::from_expr(text, expr, schema).map(Self)
    }

    /// Text as the agent emitted it.
    pub fn source_text(&self) -> &str {
        &self.0.source
    }

    /// Canonical pretty-printed form.
    pub fn canonical(&self) -> String {
        self.0.expr.to_string()
    }

    pub fn expr(&self) -> &Expr {
        &self.0.expr
    }

    pub fn schema(&self) -> &Schema {
        &self.0.schema
    }

    /// Evaluate on a flat `[s.., a.., sn..]` row.
    #[inline]
    pub fn eval_row(&self, row: &[f64], notes: &mut EvalNotes) -> f64 {
        debug_assert_eq!(row.len(), self.0.schema.row_width());
        eval_bound(&self.0.bound, row, notes)
    }

    pub fn eval_transition(&self, state: &[f64], action: &[f64], next: &[f64]) -> f64 {
        let mut row = Vec::with_capacity(self.0.schema.row_width());
        row.extend_from_slice(state);
        row.extend_from_slice(action);
        row.extend_from_slice(next);
        self.eval_row(&row, &mut EvalNotes::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Mean,
    Sum,
    Final,
    Max,
    Min,
}

impl Aggregator {
    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::Sum => "sum",
            Aggregator::Final => "final",
            Aggregator::Max => "max",
            Aggregator::Min => "min",
        }
    }

    /// Aggregate a non-empty slice.
    pub fn apply(self, values: &[f64]) -> Option<f64> {
        let last = *values.last()?;
        let v = match self {
            Aggregator::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregator::Sum => values.iter().sum(),
            Aggregator::Final => last,
            Aggregator::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregator::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        };
        Some(if v.is_finite() { v } else { 0.0 })
    }
}

impl FromStr for Aggregator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" | "average" | "avg" => Ok(Aggregator::Mean),
            "sum" | "total" => Ok(Aggregator::Sum),
            "final" | "last" => Ok(Aggregator::Final),
            "max" | "maximum" => Ok(Aggregator::Max),
            "min" | "minimum" => Ok(Aggregator::Min),
            other => Err(format!("unknown aggregator '{other}'")),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether lower or higher metric values are better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Minimize => a < b,
            Direction::Maximize => a > b,
        }
    }

    /// Ordering that sorts the best value first.
    pub fn cmp_best_first(self, a: f64, b: f64) -> std::cmp::Ordering {
        match self {
            Direction::Minimize => a.total_cmp(&b),
            Direction::Maximize => b.total_cmp(&a),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Minimize => "minimize",
            Direction::Maximize => "maximize",
        }
    }
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "minimize" | "minimise" | "min" | "lower" | "lower is better" => Ok(Direction::Minimize),
            "maximize" | "maximise" | "max" | "higher" | "higher is better" => Ok(Direction::Maximize),
            other => Err(format!("unknown direction '{other}'")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A per-step expression plus an aggregator over a whole table.
#[derive(Debug, Clone)]
pub struct MetricProgram {
    step: Compiled,
    pub aggregator: Aggregator,
    pub direction: Direction,
}

/// Persisted form of a [`MetricProgram`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub step: String,
    pub aggregator: Aggregator,
    pub direction: Direction,
}

impl MetricProgram {
    pub fn compile(
        step_source: &str,
        aggregator: Aggregator,
        direction: Direction,
        schema: &Schema,
    ) -> Result<Self, ProgramError> {
        Ok(Self {
            step: Compiled::new(step_source, schema)?,
            aggregator,
            direction,
        })
    }

    pub fn from_spec(spec: &MetricSpec, schema: &Schema) -> Result<Self, ProgramError> {
        Self::compile(&spec.step, spec.aggregator, spec.direction, schema)
    }

    pub fn spec(&self) -> MetricSpec {
        MetricSpec {
            step: self.step.expr.to_string(),
            aggregator: self.aggregator,
            direction: self.direction,
        }
    }

    pub fn step_expr(&self) -> &Expr {
        &self.step.expr
    }

    pub fn step_source(&self) -> &str {
        &self.step.source
    }

    pub fn schema(&self) -> &Schema {
        &self.step.schema
    }

    /// Aggregate the per-row step values over every row of `table`.
    pub fn eval(&self, table: &TrajectoryTable) -> Result<f64, ProgramError> {
        if table.schema() != &self.step.schema {
            return Err(ProgramError::SchemaMismatch);
        }
        if table.is_empty() {
            return Err(ProgramError::EmptyTable);
        }
        let mut notes = EvalNotes::default();
        let values: Vec<f64> = table
            .rows()
            .map(|r| eval_bound(&self.step.bound, r, &mut notes))
            .collect();
        Ok(self.aggregator.apply(&values).expect("non-empty"))
    }
}

impl fmt::Display for MetricProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}({})", self.direction, self.aggregator, self.step.expr)
    }
}

/// Free-function form of [`MetricProgram::eval`].
pub fn eval_metric(metric: &MetricProgram, table: &TrajectoryTable) -> Result<f64, ProgramError> {
    metric.eval(table)
}
