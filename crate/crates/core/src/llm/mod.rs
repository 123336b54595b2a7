//! Chat-completion gateway with live, replay and mock backends.
//!
//! Every agent call goes through [`Gateway::complete`], which counts calls
//! and, when recording, appends `(fingerprint, response)` pairs to a
//! [`Transcript`]. Replay looks responses up by fingerprint, so the order
//! of independent calls does not matter.

mod live;
mod mock;
pub mod scripted;
mod transcript;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use live::{LiveBackend, LiveConfig, RetryPolicy};
pub use mock::{MockBackend, Responder};
pub use transcript::{Transcript, TranscriptEntry, TranscriptError};

/// Sampling temperature for the reward generator.
pub const GENERATOR_TEMPERATURE: f64 = 1.0;
/// Sampling temperature for the analyzer's planning (chain-of-thought) turns.
pub const PLANNER_TEMPERATURE: f64 = 0.2;
/// Sampling temperature for the analyzer's coding turns.
pub const CODER_TEMPERATURE: f64 = 0.2;
/// Temperature for the state/action mapping agent.
pub const MAPPER_TEMPERATURE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Which agent is calling; carried for diagnostics and scripted mocks,
/// never part of the fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CallContext {
    pub agent: String,
    pub iteration: Option<u32>,
}

impl CallContext {
    pub fn new(agent: impl Into<String>, iteration: Option<u32>) -> Self {
        Self {
            agent: agent.into(),
            iteration,
        }
    }
}

impl std::fmt::Display for CallContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.iteration {
            Some(i) => write!(f, "agent '{}' at iteration {}", self.agent, i),
            None => write!(f, "agent '{}'", self.agent),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub context: CallContext,
}

#[derive(Serialize)]
struct FingerprintInput<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [ChatMessage],
}

/// Stable hex digest of `(model, messages, temperature)`.
pub fn fingerprint(model: &str, messages: &[ChatMessage], temperature: f64) -> String {
    let canonical = serde_json::to_vec(&FingerprintInput {
        model,
        temperature,
        messages,
    })
    .expect("serialisable");
    hex::encode(Sha256::digest(&canonical))
}

impl CompletionRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>, temperature: f64) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature,
            context: CallContext::default(),
        }
    }

    pub fn with_context(mut self, context: CallContext) -> Self {
        self.context = context;
        self
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.model, &self.messages, self.temperature)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if let Some(m) = self
            .messages
            .iter()
            .find(|m| m.role != Role::Assistant && m.content.trim().is_empty())
        {
            return Err(LlmError::InvalidRequest(format!(
                "empty {:?} message",
                m.role
            )));
        }
        Ok(())
    }

    /// Content of the last user message, if any.
    pub fn last_user(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("network error after {attempts} attempt(s) for {context}: {message}")]
    Network {
        attempts: u32,
        context: CallContext,
        message: String,
    },
    #[error("replay miss for {context}: no recorded response for fingerprint {fingerprint}")]
    ReplayMiss {
        context: CallContext,
        fingerprint: String,
    },
    #[error("mock backend exhausted at {0}")]
    MockExhausted(CallContext),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed provider response: {0}")]
    BadResponse(String),
    #[error("missing API key: environment variable {0} is not set")]
    MissingApiKey(String),
}

/// A source of assistant responses.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError>;

    fn name(&self) -> &'static str;
}

/// Replays a recorded transcript. Repeated identical requests receive the
/// recorded responses in order; once exhausted the last one repeats.
pub struct ReplayBackend {
    entries: Mutex<std::collections::HashMap<String, (Vec<String>, usize)>>,
}

impl ReplayBackend {
    pub fn new(transcript: &Transcript) -> Self {
        let mut map: std::collections::HashMap<String, (Vec<String>, usize)> = Default::default();
        for e in transcript.entries() {
            map.entry(e.fingerprint.clone())
                .or_default()
                .0
                .push(e.response.clone());
        }
        Self {
            entries: Mutex::new(map),
        }
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let fp = request.fingerprint();
        let mut map = self.entries.lock().expect("replay lock");
        match map.get_mut(&fp) {
            Some((responses, next)) if !responses.is_empty() => {
                let idx = (*next).min(responses.len() - 1);
                *next += 1;
                Ok(responses[idx].clone())
            }
            _ => Err(LlmError::ReplayMiss {
                context: request.context.clone(),
                fingerprint: fp,
            }),
        }
    }

    fn name(&self) -> &'static str {
        "replay"
    }
}

/// Call counter and optional recorder in front of a backend.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    model: String,
    calls: Arc<AtomicUsize>,
    recording: Option<Arc<Mutex<Transcript>>>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, model: impl Into<String>) -> Self {
        Self {
            backend,
            model: model.into(),
            calls: Arc::new(AtomicUsize::new(0)),
            recording: None,
        }
    }

    pub fn mock(backend: MockBackend) -> Self {
        Self::new(Arc::new(backend), "mock")
    }

    pub fn replay(transcript: &Transcript, model: impl Into<String>) -> Self {
        Self::new(Arc::new(ReplayBackend::new(transcript)), model)
    }

    /// Start appending every successful call to an in-memory transcript.
    pub fn recording(mut self) -> Self {
        self.recording = Some(Arc::new(Mutex::new(Transcript::default())));
        self
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Snapshot of the recorded transcript, if recording.
    pub fn transcript(&self) -> Option<Transcript> {
        self.recording
            .as_ref()
            .map(|t| t.lock().expect("transcript lock").clone())
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let response = self.backend.complete(request)?;
        if let Some(rec) = &self.recording {
            rec.lock()
                .expect("transcript lock")
                .push(TranscriptEntry::from_exchange(request, &response));
        }
        Ok(response)
    }
}

/// A multi-turn conversation owned by one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    messages: Vec<ChatMessage>,
    temperature: f64,
    agent: String,
}

impl Conversation {
    pub fn new(agent: impl Into<String>, system: impl Into<String>, temperature: f64) -> Self {
        Self {
            messages: vec![ChatMessage::system(system)],
            temperature,
            agent: agent.into(),
        }
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn agent(&self) -> &str {
        &self.agent
    }

    /// Send `user` as the next turn and append the reply to the history.
    pub fn send(
        &mut self,
        gateway: &Gateway,
        user: impl Into<String>,
        iteration: Option<u32>,
    ) -> Result<String, LlmError> {
        self.messages.push(ChatMessage::user(user));
        let req = CompletionRequest::new(gateway.model(), self.messages.clone(), self.temperature)
            .with_context(CallContext::new(self.agent.clone(), iteration));
        match gateway.complete(&req) {
            Ok(reply) => {
                self.messages.push(ChatMessage::assistant(reply.clone()));
                Ok(reply)
            }
            Err(e) => {
                self.messages.pop();
                Err(e)
            }
        }
    }

    /// Ask a one-off follow-up on top of the current history without
    /// extending it.
    pub fn side_query(
        &self,
        gateway: &Gateway,
        agent: &str,
        extra: Vec<ChatMessage>,
        iteration: Option<u32>,
    ) -> Result<String, LlmError> {
        let mut messages = self.messages.clone();
        messages.extend(extra);
        let req = CompletionRequest::new(gateway.model(), messages, self.temperature)
            .with_context(CallContext::new(agent, iteration));
        gateway.complete(&req)
    }
}
