use std::sync::{Condvar, Mutex};
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::PromptPair;

pub const DEFAULT_TEMPERATURE: f64 = 1.0;
pub const DEFAULT_MAX_TOKENS: u32 = 4096;
pub const DEFAULT_CREDENTIAL_ENV: &str = "GSNKIT_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("transport failure: {0}")]
    Unavailable(String),
    #[error("backend answered HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("backend refused: {0}")]
    Refusal(String),
    #[error("unexpected backend response: {0}")]
    Protocol(String),
}

/// Anything that turns a prompt pair into a text reply.
pub trait GenerationBackend: Send + Sync {
    /// Short label used in logs and evaluation reports.
    fn name(&self) -> &str;
    fn complete(&self, prompt: &PromptPair) -> Result<String, BackendError>;
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

fn default_credential_env() -> String {
    DEFAULT_CREDENTIAL_ENV.to_string()
}

fn default_timeout() -> u64 {
    120
}

/// Settings for a chat-completion endpoint. The credential itself is never
/// stored here, only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationBackendConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_credential_env")]
    pub credential_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

impl GenerationBackendConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            credential_env: DEFAULT_CREDENTIAL_ENV.to_string(),
            timeout_secs: default_timeout(),
        }
    }

    pub fn check(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::Config(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::Config("max_tokens must be at least 1".into()));
        }
        if self.model.trim().is_empty() {
            return Err(BackendError::Config("model name is empty".into()));
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(BackendError::Config(format!("endpoint `{}` is not an http(s) URL", self.endpoint)));
        }
        Ok(())
    }
}

/// Client for endpoints that accept the common chat-completions request shape.
pub struct ChatCompletionBackend {
    config: GenerationBackendConfig,
    client: reqwest::blocking::Client,
}

impl ChatCompletionBackend {
    pub fn new(config: GenerationBackendConfig) -> Result<Self, BackendError> {
        config.check()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &GenerationBackendConfig {
        &self.config
    }

    fn request_body(&self, prompt: &PromptPair) -> Value {
        json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        })
    }

    fn send_once(&self, body: &Value, credential: Option<&str>) -> Result<Value, BackendError> {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = credential {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Unavailable(e.to_string()))?;
        debug!("backend response ({status}): {text}");
        if !status.is_success() {
            return Err(BackendError::Http {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))
    }
}

fn retryable(e: &BackendError) -> bool {
    match e {
        BackendError::Unavailable(_) => true,
        BackendError::Http { status, .. } => *status >= 500,
        _ => false,
    }
}

/// Pulls the reply text out of a chat-completions response body.
pub(crate) fn extract_reply(body: &Value) -> Result<String, BackendError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Protocol("response has no choices".into()))?;
    let message = choice.get("message");
    if let Some(refusal) = message.and_then(|m| m.get("refusal")).and_then(Value::as_str) {
        return Err(BackendError::Refusal(refusal.to_string()));
    }
    if choice.get("finish_reason").and_then(Value::as_str) == Some("content_filter") {
        return Err(BackendError::Refusal("content filtered".into()));
    }
    message
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Protocol("choice has no message content".into()))
}

impl GenerationBackend for ChatCompletionBackend {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, prompt: &PromptPair) -> Result<String, BackendError> {
        let credential = std::env::var(&self.config.credential_env).ok();
        let body = self.request_body(prompt);
        debug!(
            "POST {} (authorization: {}) body: {body}",
            self.config.endpoint,
            if credential.is_some() { "Bearer [redacted]" } else { "none" }
        );
        let response = match self.send_once(&body, credential.as_deref()) {
            Err(e) if retryable(&e) => {
                warn!("backend request failed ({e}), retrying once");
                self.send_once(&body, credential.as_deref())?
            }
            other => other?,
        };
        extract_reply(&response)
    }
}

/// Returns the same reply to every prompt. Useful for tests and dry runs.
#[derive(Debug, Clone)]
pub struct FixedReplyBackend {
    label: String,
    reply: Result<String, BackendError>,
}

impl FixedReplyBackend {
    pub fn new(reply: impl Into<String>) -> Self {
        Self {
            label: "fixed".into(),
            reply: Ok(reply.into()),
        }
    }

    pub fn failing(error: BackendError) -> Self {
        Self {
            label: "fixed".into(),
            reply: Err(error),
        }
    }

    pub fn named(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl GenerationBackend for FixedReplyBackend {
    fn name(&self) -> &str {
        &self.label
    }

    fn complete(&self, _prompt: &PromptPair) -> Result<String, BackendError> {
        self.reply.clone()
    }
}

/// Caps the number of concurrent `complete` calls on the wrapped backend.
pub struct Bounded<B> {
    inner: B,
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl<B: GenerationBackend> Bounded<B> {
    pub fn new(inner: B, limit: usize) -> Self {
        Self {
            inner,
            limit: limit.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }
}

impl<B: GenerationBackend> GenerationBackend for Bounded<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, prompt: &PromptPair) -> Result<String, BackendError> {
        {
            let mut n = self.in_flight.lock().unwrap_or_else(|p| p.into_inner());
            while *n >= self.limit {
                n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
            }
            *n += 1;
        }
        let result = self.inner.complete(prompt);
        *self.in_flight.lock().unwrap_or_else(|p| p.into_inner()) -= 1;
        self.freed.notify_one();
        result
    }
}
