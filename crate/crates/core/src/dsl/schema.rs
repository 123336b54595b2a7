use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{Scope, Var};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("schema must declare at least one state")]
    NoStates,
    #[error("duplicate {kind} name '{name}'")]
    Duplicate { kind: &'static str, name: String },
    #[error("'{0}' is not a valid identifier")]
    InvalidName(String),
}

/// Ordered state and action names of an environment.
///
/// Bound expressions address a flat transition row laid out as
/// `[states.., actions.., next_states..]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct Schema {
    states: Vec<String>,
    actions: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawSchema {
    states: Vec<String>,
    actions: Vec<String>,
}

impl TryFrom<RawSchema> for Schema {
    type Error = SchemaError;
    fn try_from(raw: RawSchema) -> Result<Self, SchemaError> {
        Schema::new(raw.states, raw.actions)
    }
}

impl From<Schema> for RawSchema {
    fn from(s: Schema) -> Self {
        RawSchema {
            states: s.states,
            actions: s.actions,
        }
    }
}

pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Schema {
    pub fn new<S: Into<String>, A: Into<String>>(
        states: impl IntoIterator<Item = S>,
        actions: impl IntoIterator<Item = A>,
    ) -> Result<Self, SchemaError> {
        let states: Vec<String> = states.into_iter().map(Into::into).collect();
        let actions: Vec<String> = actions.into_iter().map(Into::into).collect();
        if states.is_empty() {
            return Err(SchemaError::NoStates);
        }
        for (kind, names) in [("state", &states), ("action", &actions)] {
            for (i, n) in names.iter().enumerate() {
                if !is_identifier(n) {
                    return Err(SchemaError::InvalidName(n.clone()));
                }
                if names[..i].contains(n) {
                    return Err(SchemaError::Duplicate {
                        kind,
                        name: n.clone(),
                    });
                }
            }
        }
        Ok(Self { states, actions })
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn state_dim(&self) -> usize {
        self.states.len()
    }

    pub fn action_dim(&self) -> usize {
        self.actions.len()
    }

    /// Width of a flat transition row.
    pub fn row_width(&self) -> usize {
        2 * self.states.len() + self.actions.len()
    }

    /// Slot of `var` inside a transition row, if the schema declares it.
    pub fn slot(&self, var: &Var) -> Option<usize> {
        let find = |names: &[String]| names.iter().position(|n| *n == var.name);
        match var.scope {
            Scope::State => find(&self.states),
            Scope::Action => find(&self.actions).map(|i| self.states.len() + i),
            Scope::NextState => find(&self.states).map(|i| self.states.len() + self.actions.len() + i),
        }
    }

    /// Qualified column names in row order: `s.*`, `a.*`, `sn.*`.
    pub fn columns(&self) -> Vec<String> {
        let mut cols = Vec::with_capacity(self.row_width());
        cols.extend(self.states.iter().map(|n| format!("s.{n}")));
        cols.extend(self.actions.iter().map(|n| format!("a.{n}")));
        cols.extend(self.states.iter().map(|n| format!("sn.{n}")));
        cols
    }

    /// Every variable the schema declares.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::with_capacity(self.row_width());
        out.extend(self.states.iter().map(Var::state));
        out.extend(self.actions.iter().map(Var::action));
        out.extend(self.states.iter().map(Var::next_state));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_follow_row_layout() {
        let s = Schema::new(["x", "v"], ["f"]).unwrap();
        assert_eq!(s.slot(&Var::state("v")), Some(1));
        assert_eq!(s.slot(&Var::action("f")), Some(2));
        assert_eq!(s.slot(&Var::next_state("x")), Some(3));
        assert_eq!(s.slot(&Var::action("x")), None);
        assert_eq!(s.columns(), ["s.x", "s.v", "a.f", "sn.x", "sn.v"]);
    }

    #[test]
    fn rejects_bad_schemas() {
        assert_eq!(Schema::new(Vec::<String>::new(), Vec::<String>::new()), Err(SchemaError::NoStates));
        assert!(matches!(
            Schema::new(["x", "x"], Vec::<String>::new()),
            Err(SchemaError::Duplicate { .. })
        ));
        assert!(matches!(
            Schema::new(["pole angle"], Vec::<String>::new()),
            Err(SchemaError::InvalidName(_))
        ));
    }
}
