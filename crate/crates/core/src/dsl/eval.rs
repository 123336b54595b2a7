//! Total evaluation semantics.
//!
//! Every node produces a finite value: `x/0 = 0`, `sqrt(x<0) = 0`,
//! `0^(negative) = 0`, `exp` saturates at `1e18`, and any other
//! non-finite intermediate is replaced by `0` and counted in
//! [`EvalNotes`].

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::ast::{BinOp, CmpOp, Expr, Func, Var};

pub const EXP_CEILING: f64 = 1e18;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unresolved identifier '{0}' (expression was not validated against this row)")]
    Unresolved(String),
    #[error("{function}() called with {found} argument(s), expected {expected}")]
    Arity {
        function: &'static str,
        expected: usize,
        found: usize,
    },
}

/// Side-channel record of semantic clamping during evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalNotes {
    pub non_finite_replaced: u64,
}

impl EvalNotes {
    pub fn is_clean(&self) -> bool {
        self.non_finite_replaced == 0
    }
}

/// A row of named scalars that expressions can read from.
pub trait Row {
    fn value(&self, var: &Var) -> Option<f64>;
}

impl Row for HashMap<String, f64> {
    fn value(&self, var: &Var) -> Option<f64> {
        self.get(&var.qualified()).copied()
    }
}

impl Row for BTreeMap<String, f64> {
    fn value(&self, var: &Var) -> Option<f64> {
        self.get(&var.qualified()).copied()
    }
}

impl Row for [(Var, f64)] {
    fn value(&self, var: &Var) -> Option<f64> {
        self.iter().find(|(v, _)| v == var).map(|(_, x)| *x)
    }
}

#[inline]
fn finite(x: f64, notes: &mut EvalNotes) -> f64 {
    if x.is_finite() {
        x
    } else {
        notes.non_finite_replaced += 1;
        0.0
    }
}

#[inline]
fn apply_binary(op: BinOp, a: f64, b: f64, notes: &mut EvalNotes) -> f64 {
    let raw = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                0.0
            } else {
                a / b
            }
        }
        BinOp::Pow => {
            if a == 0.0 && b < 0.0 {
                0.0
            } else {
                a.powf(b)
            }
        }
    };
    finite(raw, notes)
}

#[inline]
fn apply_compare(op: CmpOp, a: f64, b: f64) -> f64 {
    let holds = match op {
        CmpOp::Lt => a < b,
        CmpOp::Le => a <= b,
        CmpOp::Gt => a > b,
        CmpOp::Ge => a >= b,
        CmpOp::Eq => a == b,
    };
    if holds {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn apply_unary(func: Func, x: f64, notes: &mut EvalNotes) -> f64 {
    let raw = match func {
        Func::Abs => x.abs(),
        Func::Exp => x.exp().min(EXP_CEILING),
        Func::Tanh => x.tanh(),
        Func::Sqrt => {
            if x < 0.0 {
                0.0
            } else {
                x.sqrt()
            }
        }
        Func::Sign => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        _ => unreachable!("not a unary function"),
    };
    finite(raw, notes)
}

fn check_arity(func: Func, found: usize) -> Result<(), EvalError> {
    if func.arity() == found {
        Ok(())
    } else {
        Err(EvalError::Arity {
            function: func.name(),
            expected: func.arity(),
            found,
        })
    }
}

/// Generic evaluator, shared by named-row and slot-bound evaluation.
pub(crate) fn eval_with<V>(
    expr: &Expr<V>,
    lookup: &impl Fn(&V) -> Result<f64, EvalError>,
    notes: &mut EvalNotes,
) -> Result<f64, EvalError> {
    Ok(match expr {
        Expr::Const(c) => finite(*c, notes),
        Expr::Ref(v) => finite(lookup(v)?, notes),
        Expr::Neg(e) => -eval_with(e, lookup, notes)?,
        Expr::Binary(op, l, r) => {
            let a = eval_with(l, lookup, notes)?;
            let b = eval_with(r, lookup, notes)?;
            apply_binary(*op, a, b, notes)
        }
        Expr::Compare(op, l, r) => {
            let a = eval_with(l, lookup, notes)?;
            let b = eval_with(r, lookup, notes)?;
            apply_compare(*op, a, b)
        }
        Expr::Call(func, args) => {
            check_arity(*func, args.len())?;
            match func {
                Func::Min | Func::Max => {
                    let a = eval_with(&args[0], lookup, notes)?;
                    let b = eval_with(&args[1], lookup, notes)?;
                    if *func == Func::Min {
                        a.min(b)
                    } else {
                        a.max(b)
                    }
                }
                Func::Clip => {
                    let x = eval_with(&args[0], lookup, notes)?;
                    let lo = eval_with(&args[1], lookup, notes)?;
                    let hi = eval_with(&args[2], lookup, notes)?;
                    // lo wins when the bounds are inverted
                    x.min(hi).max(lo)
                }
                Func::If => {
                    let cond = eval_with(&args[0], lookup, notes)?;
                    if cond != 0.0 {
                        eval_with(&args[1], lookup, notes)?
                    } else {
                        eval_with(&args[2], lookup, notes)?
                    }
                }
                unary => {
                    let x = eval_with(&args[0], lookup, notes)?;
                    apply_unary(*unary, x, notes)
                }
            }
        }
    })
}

/// Evaluate against a named row.
pub fn eval_step<R: Row + ?Sized>(expr: &Expr, row: &R) -> Result<f64, EvalError> {
    let mut notes = EvalNotes::default();
    eval_step_noted(expr, row, &mut notes)
}

pub fn eval_step_noted<R: Row + ?Sized>(
    expr: &Expr,
    row: &R,
    notes: &mut EvalNotes,
) -> Result<f64, EvalError> {
    let lookup = |v: &Var| row.value(v).ok_or_else(|| EvalError::Unresolved(v.qualified()));
    eval_with(expr, &lookup, notes)
}

/// Evaluate a slot-bound expression on a flat transition row.
///
/// Panics if a slot is outside `row`; binding against the row's schema
/// rules that out.
#[inline]
pub fn eval_bound(expr: &Expr<usize>, row: &[f64], notes: &mut EvalNotes) -> f64 {
    let lookup = |i: &usize| Ok(row[*i]);
    match eval_with(expr, &lookup, notes) {
        Ok(v) => v,
        Err(e) => panic!("bound expression failed: {e}"),
    }
}
