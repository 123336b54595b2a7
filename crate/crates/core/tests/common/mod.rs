//! Shared fixtures for integration tests: a random expression generator
//! and a reference interpreter written directly from the language rules.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rewardopt::dsl::{BinOp, CmpOp, Expr, Func, Scope, Var};
use rewardopt::Schema;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn test_schema() -> Schema {
    Schema::new(["x", "y", "v"], ["u"]).unwrap()
}

fn random_var(r: &mut ChaCha8Rng, schema: &Schema) -> Var {
    match r.random_range(0..3) {
        0 => Var::state(schema.states()[r.random_range(0..schema.state_dim())].clone()),
        1 => Var::action(schema.actions()[r.random_range(0..schema.action_dim())].clone()),
        _ => Var::next_state(schema.states()[r.random_range(0..schema.state_dim())].clone()),
    }
}

fn random_const(r: &mut ChaCha8Rng) -> f64 {
    match r.random_range(0..6) {
        0 => 0.0,
        1 => r.random_range(-5i32..=5) as f64,
        2 => r.random_range(-10.0..10.0),
        3 => r.random_range(0.0..1.0),
        4 => 10f64.powi(r.random_range(-8..=8)),
        _ => -r.random_range(0.0..3.0),
    }
}

/// Random well-formed tree of at most `depth` levels.
pub fn random_expr(r: &mut ChaCha8Rng, schema: &Schema, depth: u32) -> Expr {
    if depth == 0 || r.random_bool(0.25) {
        return if r.random_bool(0.6) {
            Expr::Ref(random_var(r, schema))
        } else {
            Expr::Const(random_const(r))
        };
    }
    let d = depth - 1;
    match r.random_range(0..10) {
        0 => Expr::neg(random_expr(r, schema, d)),
        1..=5 => {
            let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow][r.random_range(0..5)];
            Expr::binary(op, random_expr(r, schema, d), random_expr(r, schema, d))
        }
        6 => {
            let op = [CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq][r.random_range(0..5)];
            Expr::compare(op, random_expr(r, schema, d), random_expr(r, schema, d))
        }
        _ => {
            let f = Func::ALL[r.random_range(0..Func::ALL.len())];
            let args = (0..f.arity()).map(|_| random_expr(r, schema, d)).collect();
            Expr::Call(f, args)
        }
    }
}

/// Random named row covering every column, with occasional zeros and
/// extreme magnitudes.
pub fn random_row(r: &mut ChaCha8Rng, schema: &Schema) -> BTreeMap<String, f64> {
    schema
        .columns()
        .into_iter()
        .map(|c| {
            let v = match r.random_range(0..10) {
                0 => 0.0,
                1 => r.random_range(-1e200..1e200),
                2 => r.random_range(-1e-200..1e-200),
                _ => r.random_range(-5.0..5.0),
            };
            (c, v)
        })
        .collect()
}

/// Flat `[s.., a.., sn..]` layout of a named row.
pub fn flat_row(schema: &Schema, row: &BTreeMap<String, f64>) -> Vec<f64> {
    schema.columns().iter().map(|c| row[c]).collect()
}

fn keep_finite(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

/// Reference semantics: division by zero, square roots of negatives and
/// zero to a negative power give 0; exp is capped at 1e18; comparisons
/// give 1 or 0; `if` picks its second argument when the first is
/// non-zero; any other non-finite result becomes 0.
pub fn reference_eval(e: &Expr, row: &BTreeMap<String, f64>) -> f64 {
    let ev = |x: &Expr| reference_eval(x, row);
    match e {
        Expr::Const(c) => keep_finite(*c),
        Expr::Ref(v) => {
            let prefix = match v.scope {
                Scope::State => "s",
                Scope::Action => "a",
                Scope::NextState => "sn",
            };
            keep_finite(row[&format!("{prefix}.{}", v.name)])
        }
        Expr::Neg(x) => -ev(x),
        Expr::Binary(op, l, r) => {
            let (a, b) = (ev(l), ev(r));
            keep_finite(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div if b == 0.0 => 0.0,
                BinOp::Div => a / b,
                BinOp::Pow if a == 0.0 && b < 0.0 => 0.0,
                BinOp::Pow => a.powf(b),
            })
        }
        Expr::Compare(op, l, r) => {
            let (a, b) = (ev(l), ev(r));
            let t = match op {
                CmpOp::Lt => a < b,
                CmpOp::Le => a <= b,
                CmpOp::Gt => a > b,
                CmpOp::Ge => a >= b,
                CmpOp::Eq => a == b,
            };
            f64::from(u8::from(t))
        }
        Expr::Call(f, args) => match f {
            Func::Abs => ev(&args[0]).abs(),
            Func::Exp => {
                let y = ev(&args[0]).exp();
                if y > 1e18 {
                    1e18
                } else {
                    y
                }
            }
            Func::Tanh => ev(&args[0]).tanh(),
            Func::Sqrt => {
                let x = ev(&args[0]);
                if x < 0.0 {
                    0.0
                } else {
                    x.sqrt()
                }
            }
            Func::Sign => {
                let x = ev(&args[0]);
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Func::Min => ev(&args[0]).min(ev(&args[1])),
            Func::Max => ev(&args[0]).max(ev(&args[1])),
            Func::Clip => {
                let (x, lo, hi) = (ev(&args[0]), ev(&args[1]), ev(&args[2]));
                let capped = if x > hi { hi } else { x };
                if capped < lo {
                    lo
                } else {
                    capped
                }
            }
            Func::If => {
                if ev(&args[0]) != 0.0 {
                    ev(&args[1])
                } else {
                    ev(&args[2])
                }
            }
        },
    }
}
