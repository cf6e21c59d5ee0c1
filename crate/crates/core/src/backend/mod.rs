//! Text-generation backends and the plan runner.
//!
//! Every backend produces an OpenAI-style chat-completion JSON document;
//! the response text is always read from `choices[0].message.content`, so
//! live, mock and cached responses go through the same extraction path.

mod cache;
mod http;
mod mock;
mod runner;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::time::Duration;
use thiserror::Error;

use crate::experiment::TrialSpec;

pub use cache::{cache_key, CacheEntry, CacheMode, CachedBackend, ReplayCache};
pub use http::{HttpBackend, HttpConfig};
pub use mock::{AnswerBias, MockBackend, MockProfile};
pub use runner::{run_plan, run_plan_collect, RetryPolicy, RunError, RunOptions, RunSummary};

pub const DEFAULT_TEMPERATURE: f64 = 0.5;
pub const DEFAULT_MAX_TOKENS: u32 = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            model_name: "gpt-4".to_string(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: None,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::Config(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("HTTP {status}: {body}")]
    Transport { status: u16, body: String },
    #[error("rate limited (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("cannot reach backend: {0}")]
    Connection(String),
    #[error("authentication rejected (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no cached response for key {0}")]
    CacheMiss(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("empty prompt")]
    EmptyPrompt,
}

impl BackendError {
    /// Worth retrying with backoff.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::RateLimited { .. }
            | BackendError::Timeout
            | BackendError::Connection(_) => true,
            BackendError::Transport { status, .. } => *status >= 500,
            _ => false,
        }
    }

    /// Aborts the whole run instead of being recorded against one trial.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            BackendError::Auth { .. } | BackendError::Config(_) | BackendError::Connection(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BackendError::Transport { .. } => "transport",
            BackendError::RateLimited { .. } => "rate_limited",
            BackendError::Timeout => "timeout",
            BackendError::MalformedResponse(_) => "malformed_response",
            BackendError::Connection(_) => "connection",
            BackendError::Auth { .. } => "auth",
            BackendError::Config(_) => "config",
            BackendError::CacheMiss(_) => "cache_miss",
            BackendError::Cache(_) => "cache",
            BackendError::EmptyPrompt => "empty_prompt",
        }
    }
}

/// A backend's answer to one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    /// Raw chat-completion JSON.
    pub raw: Value,
    pub backend_id: String,
    pub latency_ms: u64,
    pub timestamp: DateTime<Utc>,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    /// Sends `prompt` and returns the first choice's message text.
    /// `metadata` is the trial being run; backends that do not need it ignore it.
    fn complete(
        &self,
        prompt: &str,
        params: &GenerationParams,
        metadata: Option<&TrialSpec>,
    ) -> Result<Completion, BackendError>;

    /// Timestamp used for records of failed trials.
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(
        &self,
        prompt: &str,
        params: &GenerationParams,
        metadata: Option<&TrialSpec>,
    ) -> Result<Completion, BackendError> {
        (**self).complete(prompt, params, metadata)
    }

    fn now(&self) -> DateTime<Utc> {
        (**self).now()
    }
}

/// Reads `choices[0].message.content` from a chat-completion document.
pub fn extract_content(raw: &Value) -> Result<String, BackendError> {
    raw.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].message.content".into()))
}

/// Builds a minimal chat-completion document around `content`.
pub fn chat_completion_json(id: &str, model: &str, content: &str) -> Value {
    serde_json::json!({
        "id": id,
        "object": "chat.completion",
        "model": model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop"
        }]
    })
}

/// Error marker stored on a record whose trial failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialError {
    pub kind: String,
    pub message: String,
}

impl From<&BackendError> for TrialError {
    fn from(e: &BackendError) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

/// A trial spec together with what the backend returned for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    #[serde(flatten)]
    pub spec: TrialSpec,
    pub rendered_prompt: String,
    pub response_text: Option<String>,
    pub error: Option<TrialError>,
    pub backend_id: String,
    pub latency_ms: u64,
    pub timestamp: DateTime<Utc>,
    pub attempts: u32,
}

impl TrialRecord {
    pub fn is_success(&self) -> bool {
        self.error.is_none() && self.response_text.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_first_choice() {
        let raw = chat_completion_json("x", "m", "The nurse is right.");
        assert_eq!(extract_content(&raw).unwrap(), "The nurse is right.");
        let bad = serde_json::json!({"choices": []});
        assert!(matches!(
            extract_content(&bad),
            Err(BackendError::MalformedResponse(_))
        ));
    }

    #[test]
    fn params_validation() {
        let mut p = GenerationParams::default();
        assert_eq!(p.temperature, 0.5);
        assert!(p.validate().is_ok());
        p.temperature = 2.5;
        assert!(p.validate().is_err());
        p.temperature = 1.0;
        p.max_tokens = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn error_classes() {
        assert!(BackendError::Timeout.is_retryable());
        assert!(!BackendError::Timeout.is_fatal());
        assert!(BackendError::Auth {
            status: 401,
            body: String::new()
        }
        .is_fatal());
        assert!(!BackendError::MalformedResponse(String::new()).is_retryable());
        let transport = |status| BackendError::Transport {
            status,
            body: String::new(),
        };
        assert!(transport(503).is_retryable());
        assert!(!transport(400).is_retryable());
        assert!(!transport(0).is_retryable());
    }
}
