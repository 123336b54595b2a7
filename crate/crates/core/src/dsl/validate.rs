use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{Expr, Func, Var};
use super::schema::Schema;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArityError {
    pub function: String,
    pub expected: usize,
    pub found: usize,
}

/// Outcome of checking an expression against a schema. Valid iff every
/// list is empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub unknown_identifiers: Vec<String>,
    pub arity_errors: Vec<ArityError>,
    pub non_finite_constants: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.unknown_identifiers.is_empty()
            && self.arity_errors.is_empty()
            && self.non_finite_constants == 0
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return f.write_str("valid");
        }
        let mut parts = Vec::new();
        if !self.unknown_identifiers.is_empty() {
            parts.push(format!(
                "unknown identifiers: {}",
                self.unknown_identifiers.join(", ")
            ));
        }
        for a in &self.arity_errors {
            parts.push(format!(
                "{}() takes {} argument(s) but was given {}",
                a.function, a.expected, a.found
            ));
        }
        if self.non_finite_constants > 0 {
            parts.push(format!("{} non-finite constant(s)", self.non_finite_constants));
        }
        f.write_str(&parts.join("; "))
    }
}

pub fn validate(expr: &Expr, schema: &Schema) -> ValidationReport {
    let mut report = ValidationReport::default();
    expr.walk(&mut |node| match node {
        Expr::Ref(v) => note_unknown(&mut report, v, schema),
        Expr::Call(func, args) => check_arity(&mut report, *func, args.len()),
        Expr::Const(c) if !c.is_finite() => report.non_finite_constants += 1,
        _ => {}
    });
    report
}

fn note_unknown(report: &mut ValidationReport, v: &Var, schema: &Schema) {
    if schema.slot(v).is_none() {
        let q = v.qualified();
        if !report.unknown_identifiers.contains(&q) {
            report.unknown_identifiers.push(q);
        }
    }
}

fn check_arity(report: &mut ValidationReport, func: Func, found: usize) {
    if func.arity() != found {
        report.arity_errors.push(ArityError {
            function: func.name().to_string(),
            expected: func.arity(),
            found,
        });
    }
}
