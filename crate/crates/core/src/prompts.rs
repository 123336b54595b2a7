//! Versioned prompt templates with named `{placeholder}` slots.

use std::collections::BTreeSet;

use thiserror::Error;

pub const VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template '{template}' needs a value for '{{{name}}}'")]
    Missing { template: &'static str, name: String },
    #[error("template '{template}' has no placeholder '{{{name}}}'")]
    Unknown { template: &'static str, name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! templates {
    ($($ident:ident => $file:literal),* $(,)?) => {
        $(pub const $ident: Template = Template {
            name: $file,
            text: include_str!(concat!("../prompts/v1/", $file, ".txt")),
        };)*
        pub const ALL: &[Template] = &[$($ident),*];
    };
}

templates! {
    DSL_REFERENCE => "dsl_reference",
    MAPPER_SYSTEM => "mapper_system",
    MAPPER_USER => "mapper_user",
    MAPPER_REPROMPT => "mapper_reprompt",
    GENERATOR_SYSTEM => "generator_system",
    GENERATOR_INITIAL => "generator_initial",
    GENERATOR_MUTATE => "generator_mutate",
    GENERATOR_REPAIR => "generator_repair",
    PLANNER_SYSTEM => "planner_system",
    PLANNER_INSIGHTS => "planner_insights",
    PLANNER_PROPOSALS => "planner_proposals",
    PLANNER_REPROMPT => "planner_reprompt",
    CODER_SYSTEM => "coder_system",
    CODER_USER => "coder_user",
    CODER_REPAIR => "coder_repair",
    CODER_DIRECTION => "coder_direction",
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        match name {
            Some(n) if !n.is_empty() && n.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') => {
                out.push(Piece::Text(&rest[..open]));
                out.push(Piece::Slot(n));
                rest = &after[n.len() + 1..];
            }
            _ => {
                out.push(Piece::Text(&rest[..open + 1]));
                rest = after;
            }
        }
    }
    out.push(Piece::Text(rest));
    out
}

impl Template {
    pub fn placeholders(&self) -> BTreeSet<&'static str> {
        pieces(self.text)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(n) => Some(n),
                Piece::Text(_) => None,
            })
            .collect()
    }

    /// Substitute every placeholder. Every placeholder must be given and
    /// every given name must occur in the template. Values are inserted
    /// verbatim and never re-scanned.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let used = self.placeholders();
        if let Some((k, _)) = values.iter().find(|(k, _)| !used.contains(k)) {
            return Err(TemplateError::Unknown {
                template: self.name,
                name: k.to_string(),
            });
        }
        let mut out = String::with_capacity(self.text.len());
        for p in pieces(self.text) {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(n) => {
                    let v = values.iter().find(|(k, _)| *k == n).ok_or_else(|| {
                        TemplateError::Missing {
                            template: self.name,
                            name: n.to_string(),
                        }
                    })?;
                    out.push_str(v.1);
                }
            }
        }
        Ok(out.trim_end().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_all_slots() {
        let t = GENERATOR_REPAIR;
        assert_eq!(
            t.placeholders().into_iter().collect::<Vec<_>>(),
            vec!["code", "error"]
        );
        let s = t.render(&[("code", "s.x +"), ("error", "parse error {x}")]).unwrap();
        assert!(s.contains("s.x +"));
        assert!(s.contains("parse error {x}"));
        assert!(!s.contains("{code}"));
    }

    #[test]
    fn missing_and_unknown_are_errors() {
        assert!(matches!(
            GENERATOR_REPAIR.render(&[("code", "1")]),
            Err(TemplateError::Missing { .. })
        ));
        assert!(matches!(
            GENERATOR_REPAIR.render(&[("code", "1"), ("error", "e"), ("extra", "x")]),
            Err(TemplateError::Unknown { .. })
        ));
    }

    #[test]
    fn every_template_is_nonempty() {
        for t in ALL {
            assert!(!t.text.trim().is_empty(), "{}", t.name);
        }
        assert!(DSL_REFERENCE.placeholders().is_empty());
    }
}
