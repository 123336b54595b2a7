use serde::{Deserialize, Serialize};

use crate::dsl::{EvalNotes, ProgramError, RewardProgram, Schema};
use crate::table::TrajectoryTable;

/// Total attempts per candidate, the first one included.
pub const MAX_REPAIR_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanityReport {
    pub passed: bool,
    pub attempts: u32,
    /// `(attempt, message)` for each failed attempt, in order.
    pub failures: Vec<(u32, String)>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SanityFailure {
    #[error("{0}")]
    Program(#[from] ProgramError),
    #[error("non-finite reward at sample row {0}")]
    NonFinite(usize),
    #[error("degenerate constant reward: every sample row gives {0}")]
    Constant(f64),
    #[error("no candidate code block in the reply")]
    Missing,
}

/// Parse, validate against `schema`, evaluate on every row of `sample`
/// and reject non-finite or constant outputs.
pub fn sanity_check(
    source: &str,
    schema: &Schema,
    sample: &TrajectoryTable,
) -> Result<RewardProgram, SanityFailure> {
    let program = RewardProgram::compile(source, schema)?;
    if sample.schema().row_width() != schema.row_width() {
        return Err(ProgramError::SchemaMismatch.into());
    }
    let mut notes = EvalNotes::default();
    let mut first = None;
    let mut varies = false;
    for (i, row) in sample.rows().enumerate() {
        let v = program.eval_row(row, &mut notes);
        if !v.is_finite() {
            return Err(SanityFailure::NonFinite(i));
        }
        match first {
            None => first = Some(v),
            Some(f) if f != v => varies = true,
            _ => {}
        }
    }
    match first {
        None => Err(ProgramError::EmptyTable.into()),
        Some(f) if !varies => Err(SanityFailure::Constant(f)),
        Some(_) => Ok(program),
    }
}

/// Contents of every fenced code block, in order.
pub fn code_blocks(reply: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in reply.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(lines), true) => {
                blocks.push(lines.join("\n").trim().to_string());
                current = None;
            }
            (Some(lines), false) => lines.push(line),
            (None, false) => {}
        }
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvName, EnvSpec};
    use crate::trainer::random_rollout;

    fn fixture() -> (Schema, TrajectoryTable) {
        let env = EnvSpec::builtin(EnvName::Cartpole).unwrap();
        (env.schema.clone(), random_rollout(&env, 2, 20, 7))
    }

    #[test]
    fn known_good_passes() {
        let (schema, sample) = fixture();
        assert!(sanity_check("-(s.pole_angle^2) - 0.01*a.cart_force^2", &schema, &sample).is_ok());
    }

    #[test]
    fn parse_failure_message_is_kept() {
        let (schema, sample) = fixture();
        let err = sanity_check("s.pole_angle +", &schema, &sample).unwrap_err();
        assert!(err.to_string().starts_with("parse error at position"), "{err}");
    }

    #[test]
    fn unknown_identifier_named() {
        let (schema, sample) = fixture();
        let err = sanity_check("s.tip_height", &schema, &sample).unwrap_err();
        assert!(err.to_string().contains("s.tip_height"), "{err}");
    }

    #[test]
    fn constant_is_degenerate() {
        let (schema, sample) = fixture();
        let err = sanity_check("0.0", &schema, &sample).unwrap_err();
        assert!(err.to_string().contains("degenerate constant reward"));
        // constant after evaluation, not just syntactically
        assert!(matches!(
            sanity_check("s.pole_angle - s.pole_angle", &schema, &sample),
            Err(SanityFailure::Constant(_))
        ));
    }

    #[test]
    fn extracts_fenced_blocks() {
        let reply = "Here:\n```dsl\n-s.x^2\n```\ntext\n```\n1 +\n  s.y\n```\n```\nunterminated";
        assert_eq!(code_blocks(reply), vec!["-s.x^2", "1 +\n  s.y"]);
    }
}
