use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChatMessage, CompletionRequest};

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One recorded exchange. Serialised as a single JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptEntry {
    pub fingerprint: String,
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
    pub response: String,
}

impl TranscriptEntry {
    pub fn from_exchange(request: &CompletionRequest, response: &str) -> Self {
        Self {
            fingerprint: request.fingerprint(),
            model: request.model.clone(),
            temperature: request.temperature,
            messages: request.messages.clone(),
            response: response.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: TranscriptEntry) {
        self.entries.push(entry);
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    /// Parse line-delimited records. Blank lines are skipped; a malformed
    /// line fails with its 1-based line number. Recorded fingerprints are
    /// checked against the stored request.
    pub fn read_from<R: BufRead>(input: R) -> Result<Self, TranscriptError> {
        let mut entries = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry =
                serde_json::from_str(&line).map_err(|e| TranscriptError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            let expected = super::fingerprint(&entry.model, &entry.messages, entry.temperature);
            if expected != entry.fingerprint {
                return Err(TranscriptError::Malformed {
                    line: i + 1,
                    message: "fingerprint does not match recorded request".into(),
                });
            }
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, TranscriptError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{CompletionRequest, Role};

    fn sample() -> Transcript {
        let mut t = Transcript::default();
        for (q, a) in [("map it", "STATES: x"), ("write rewards", "```\n-s.x^2\n```")] {
            let req = CompletionRequest::new(
                "gpt-test",
                vec![ChatMessage::system("sys"), ChatMessage::user(q)],
                0.2,
            );
            t.push(TranscriptEntry::from_exchange(&req, a));
        }
        t
    }

    #[test]
    fn record_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let t = sample();
        t.save(&path).unwrap();
        let back = Transcript::load(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.entries()[1].messages[1].role, Role::User);
    }

    #[test]
    fn empty_file_is_empty_transcript() {
        let t = Transcript::read_from(&b""[..]).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn corrupted_line_is_reported() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
        lines[1] = lines[1].replacen("\"response\"", "\"respons", 1);
        let corrupted = lines.join("\n");
        match Transcript::read_from(corrupted.as_bytes()) {
            Err(TranscriptError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected malformed line 2, got {other:?}"),
        }
    }

    #[test]
    fn tampered_fingerprint_is_reported() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("map it", "map that", 1);
        assert!(matches!(
            Transcript::read_from(text.as_bytes()),
            Err(TranscriptError::Malformed { line: 1, .. })
        ));
    }
}
