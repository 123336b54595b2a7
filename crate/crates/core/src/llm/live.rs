use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatMessage, CompletionRequest, LlmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay_ms: 1000,
        }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        // attempt is 1-based; no delay before the first
        if attempt <= 1 {
            Duration::ZERO
        } else {
            Duration::from_millis(self.base_delay_ms.saturating_mul(1 << (attempt - 2).min(20)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LiveConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4.1-nano".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

/// HTTP backend for providers speaking the common chat-completions
/// protocol.
pub struct LiveBackend {
    client: reqwest::blocking::Client,
    config: LiveConfig,
    api_key: Option<String>,
}

enum Failure {
    Retryable(String),
    Fatal(LlmError),
}

impl LiveBackend {
    /// Reads the API key from `config.api_key_env`.
    pub fn from_env(config: LiveConfig) -> Result<Self, LlmError> {
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| LlmError::MissingApiKey(config.api_key_env.clone()))?;
        Self::new(config, Some(key))
    }

    pub fn new(config: LiveConfig, api_key: Option<String>) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::InvalidRequest(format!("http client: {e}")))?;
        Ok(Self {
            client,
            config,
            api_key: api_key.filter(|k| !k.is_empty()),
        })
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, Failure> {
        let body = WireRequest {
            model: &request.model,
            messages: &request.messages,
            temperature: request.temperature,
        };
        let mut http = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let resp = http.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            let text = resp.text().unwrap_or_default();
            return Err(Failure::Retryable(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Failure::Fatal(LlmError::BadResponse(format!(
                "HTTP {status}: {text}"
            ))));
        }
        let parsed: WireResponse = resp
            .json()
            .map_err(|e| Failure::Fatal(LlmError::BadResponse(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Failure::Fatal(LlmError::BadResponse("no choices[0].message.content".into())))
    }
}

impl ChatBackend for LiveBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let attempts = self.config.retry.attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            std::thread::sleep(self.config.retry.delay_before(attempt));
            match self.attempt(request) {
                Ok(content) => return Ok(content),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) => {
                    log::warn!("{}: attempt {attempt}/{attempts} failed: {msg}", request.context);
                    last = msg;
                }
            }
        }
        Err(LlmError::Network {
            attempts,
            context: request.context.clone(),
            message: last,
        })
    }

    fn name(&self) -> &'static str {
        "live"
    }
}
