use serde::{Deserialize, Serialize};

use super::GeneratorError;
use crate::dsl::{is_identifier, Schema};
use crate::env::EnvSpec;
use crate::llm::{Conversation, Gateway, MAPPER_TEMPERATURE};
use crate::prompts;

/// Name and agent-written note for one vector index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionNote {
    pub index: usize,
    pub name: String,
    pub note: String,
}

/// Index-to-name mapping for the observation and action vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateActionMap {
    pub schema: Schema,
    pub states: Vec<DimensionNote>,
    pub actions: Vec<DimensionNote>,
}

impl StateActionMap {
    /// Map that uses the environment's own names and has no notes.
    pub fn from_env(env: &EnvSpec) -> Self {
        let notes = |names: &[String]| {
            names
                .iter()
                .enumerate()
                .map(|(index, name)| DimensionNote {
                    index,
                    name: name.clone(),
                    note: String::new(),
                })
                .collect()
        };
        Self {
            schema: env.schema.clone(),
            states: notes(env.schema.states()),
            actions: notes(env.schema.actions()),
        }
    }

    fn from_notes(states: Vec<DimensionNote>, actions: Vec<DimensionNote>) -> Result<Self, String> {
        let schema = Schema::new(
            states.iter().map(|d| d.name.clone()),
            actions.iter().map(|d| d.name.clone()),
        )
        .map_err(|e| e.to_string())?;
        Ok(Self {
            schema,
            states,
            actions,
        })
    }

    /// Variable listing used inside prompts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for d in &self.states {
            out.push_str(&format!("  s.{0} / sn.{0}  (observation {1})", d.name, d.index));
            if !d.note.is_empty() {
                out.push_str(&format!(": {}", d.note));
            }
            out.push('\n');
        }
        for d in &self.actions {
            out.push_str(&format!("  a.{}  (action {})", d.name, d.index));
            if !d.note.is_empty() {
                out.push_str(&format!(": {}", d.note));
            }
            out.push('\n');
        }
        out.trim_end().to_string()
    }
}

/// Lower-case, collapse separators to `_`, drop anything else.
pub fn normalize_name(raw: &str) -> String {
    let mut out = String::new();
    for c in raw.trim().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if (c.is_whitespace() || c == '-' || c == '_' || c == '.') && !out.ends_with('_') {
            out.push('_');
        }
    }
    let trimmed = out.trim_matches('_').to_string();
    if trimmed.starts_with(|c: char| c.is_ascii_digit()) {
        format!("v_{trimmed}")
    } else {
        trimmed
    }
}

#[derive(Debug, Default)]
struct Parsed {
    states: Vec<DimensionNote>,
    actions: Vec<DimensionNote>,
}

fn parse_line(rest: &str) -> Option<DimensionNote> {
    let (idx, body) = rest.split_once(':')?;
    let index = idx.trim().parse().ok()?;
    let (name, note) = match body.split_once(" - ") {
        Some((n, d)) => (n, d.trim()),
        None => (body, ""),
    };
    Some(DimensionNote {
        index,
        name: normalize_name(name.trim().trim_matches('`')),
        note: note.to_string(),
    })
}

fn parse_mapping(reply: &str) -> Parsed {
    let mut parsed = Parsed::default();
    for line in reply.lines() {
        let line = line.trim().trim_start_matches(['-', '*']).trim();
        let upper = line.to_ascii_uppercase();
        if upper.starts_with("STATE ") {
            parsed.states.extend(parse_line(&line[6..]));
        } else if upper.starts_with("ACTION ") {
            parsed.actions.extend(parse_line(&line[7..]));
        }
    }
    parsed.states.sort_by_key(|d| d.index);
    parsed.actions.sort_by_key(|d| d.index);
    parsed
}

fn check(parsed: &Parsed, n_states: usize, n_actions: usize) -> Result<(), String> {
    let mut problems = Vec::new();
    if parsed.states.len() != n_states {
        problems.push(format!("expected {n_states} states, found {}", parsed.states.len()));
    }
    if parsed.actions.len() != n_actions {
        problems.push(format!("expected {n_actions} actions, found {}", parsed.actions.len()));
    }
    for (kind, list) in [("state", &parsed.states), ("action", &parsed.actions)] {
        for (i, d) in list.iter().enumerate() {
            if d.index != i {
                problems.push(format!("{kind} indices must run 0..{} in order", list.len()));
                break;
            }
        }
        if let Some(d) = list.iter().find(|d| !is_identifier(&d.name)) {
            problems.push(format!("{kind} name '{}' is not a valid identifier", d.name));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join("; "))
    }
}

/// Ask the mapping agent to name every observation and action index.
/// One re-prompt explaining the discrepancy is allowed.
pub fn map_system(
    gateway: &Gateway,
    system_description: &str,
    n_states: usize,
    n_actions: usize,
) -> Result<StateActionMap, GeneratorError> {
    if system_description.trim().is_empty() {
        return Err(GeneratorError::EmptyDescription);
    }
    let counts = [
        ("state_count", n_states.to_string()),
        ("action_count", n_actions.to_string()),
    ];
    let mut conv = Conversation::new("mapper", prompts::MAPPER_SYSTEM.render(&[])?, MAPPER_TEMPERATURE);
    let first = prompts::MAPPER_USER.render(&[
        ("system_description", system_description.trim()),
        (counts[0].0, &counts[0].1),
        (counts[1].0, &counts[1].1),
    ])?;
    let mut reply = conv.send(gateway, first, None)?;
    for attempt in 0..2 {
        let parsed = parse_mapping(&reply);
        let problem = check(&parsed, n_states, n_actions)
            .and_then(|_| StateActionMap::from_notes(parsed.states, parsed.actions));
        match problem {
            Ok(map) => return Ok(map),
            Err(discrepancy) if attempt == 0 => {
                let again = prompts::MAPPER_REPROMPT.render(&[
                    ("discrepancy", &discrepancy),
                    (counts[0].0, &counts[0].1),
                    (counts[1].0, &counts[1].1),
                ])?;
                reply = conv.send(gateway, again, None)?;
            }
            Err(discrepancy) => {
                return Err(GeneratorError::MappingMismatch {
                    expected_states: n_states,
                    expected_actions: n_actions,
                    detail: discrepancy,
                })
            }
        }
    }
    unreachable!("loop returns on the second pass")
}
