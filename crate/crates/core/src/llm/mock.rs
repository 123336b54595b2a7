use std::collections::VecDeque;
use std::sync::Mutex;

use super::{ChatBackend, CompletionRequest, LlmError};

/// Scripted responder: inspects the request and returns the reply.
pub type Responder = Box<dyn Fn(&CompletionRequest) -> Option<String> + Send + Sync>;

/// Offline backend driven either by a FIFO queue or by a responder.
pub struct MockBackend {
    queue: Mutex<VecDeque<String>>,
    responder: Option<Responder>,
}

impl MockBackend {
    /// Responses are returned in order, one per call.
    pub fn queue<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self {
            queue: Mutex::new(responses.into_iter().map(Into::into).collect()),
            responder: None,
        }
    }

    /// Responses come from `f`; `None` means the script has no answer.
    pub fn responder(f: impl Fn(&CompletionRequest) -> Option<String> + Send + Sync + 'static) -> Self {
        Self {
            queue: Mutex::new(VecDeque::new()),
            responder: Some(Box::new(f)),
        }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("mock lock").len()
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        if let Some(f) = &self.responder {
            return f(request).ok_or_else(|| LlmError::MockExhausted(request.context.clone()));
        }
        self.queue
            .lock()
            .expect("mock lock")
            .pop_front()
            .ok_or_else(|| LlmError::MockExhausted(request.context.clone()))
    }

    fn name(&self) -> &'static str {
        "mock"
    }
}
