//! Sandboxed expression language for rewards and metrics.
//!
//! Programs read one transition row (`s.*`, `a.*`, `sn.*`) and produce a
//! scalar. There are no loops, bindings or side effects, and evaluation
//! is total: see [`eval`] for the arithmetic rules.

pub mod ast;
pub mod eval;
pub mod parser;
pub mod program;
pub mod schema;
pub mod validate;

pub use ast::{BinOp, CmpOp, Expr, Func, Scope, Var};
pub use eval::{eval_step, eval_step_noted, EvalError, EvalNotes, Row};
pub use parser::{parse_expr, ParseError};
pub use program::{
    eval_metric, Aggregator, Direction, MetricProgram, MetricSpec, ProgramError, RewardProgram,
};
pub use schema::{is_identifier, Schema, SchemaError};
pub use validate::{validate, ArityError, ValidationReport};
