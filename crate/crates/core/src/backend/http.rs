use std::io;
use std::time::{Duration, Instant};

use chrono::Utc;
use serde_json::{json, Value};

use super::{extract_content, Backend, BackendError, Completion, GenerationParams};
use crate::experiment::TrialSpec;

const BODY_EXCERPT: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout: Duration,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            timeout: Duration::from_secs(60),
        }
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
    id: String,
}

impl HttpBackend {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(config: &HttpConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            BackendError::Config(format!(
                "environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        Ok(Self::with_key(config, api_key))
    }

    pub fn with_key(config: &HttpConfig, api_key: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let base = config.base_url.trim_end_matches('/');
        Self {
            agent,
            endpoint: format!("{base}/v1/chat/completions"),
            api_key: api_key.into(),
            id: format!("http:{base}"),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

/// Request body: model, a single user message, temperature and max_tokens
/// (plus `seed` when one is set).
pub fn request_body(prompt: &str, params: &GenerationParams) -> Value {
    let mut body = json!({
        "model": params.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": params.temperature,
        "max_tokens": params.max_tokens,
    });
    if let Some(seed) = params.seed {
        body["seed"] = json!(seed);
    }
    body
}

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT).collect()
}

fn map_transport_error(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        ureq::Error::Io(io) if io.kind() == io::ErrorKind::TimedOut => BackendError::Timeout,
        ureq::Error::Io(io) => BackendError::Connection(io.to_string()),
        ureq::Error::HostNotFound | ureq::Error::ConnectionFailed => {
            BackendError::Connection(e.to_string())
        }
        ureq::Error::Json(e) => BackendError::MalformedResponse(e.to_string()),
        other => BackendError::Transport {
            status: 0,
            body: excerpt(&other.to_string()),
        },
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(
        &self,
        prompt: &str,
        params: &GenerationParams,
        _metadata: Option<&TrialSpec>,
    ) -> Result<Completion, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let timestamp = Utc::now();
        let started = Instant::now();
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request_body(prompt, params))
            .map_err(map_transport_error)?;
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .map(Duration::from_secs_f64);
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(map_transport_error)?;
        let latency_ms = started.elapsed().as_millis() as u64;
        match status {
            200..=299 => {}
            429 => return Err(BackendError::RateLimited { retry_after }),
            401 | 403 => {
                return Err(BackendError::Auth {
                    status,
                    body: excerpt(&body),
                })
            }
            408 | 504 => return Err(BackendError::Timeout),
            _ => {
                return Err(BackendError::Transport {
                    status,
                    body: excerpt(&body),
                })
            }
        }
        let raw: Value = serde_json::from_str(&body)
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let text = extract_content(&raw)?;
        Ok(Completion {
            text,
            raw,
            backend_id: self.id.clone(),
            latency_ms,
            timestamp,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_has_wire_fields() {
        let body = request_body("hi", &GenerationParams::default());
        assert_eq!(body["model"], "gpt-4");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hi");
        assert_eq!(body["temperature"], 0.5);
        assert_eq!(body["max_tokens"], 200);
        assert!(body.get("seed").is_none());
    }

    #[test]
    fn endpoint_joins_base_url() {
        let cfg = HttpConfig {
            base_url: "http://localhost:8080/".into(),
            ..HttpConfig::default()
        };
        let b = HttpBackend::with_key(&cfg, "k");
        assert_eq!(b.endpoint(), "http://localhost:8080/v1/chat/completions");
    }

    #[test]
    fn missing_key_is_config_error() {
        let cfg = HttpConfig {
            api_key_env: "FAIRPROBE_TEST_SURELY_UNSET_KEY".into(),
            ..HttpConfig::default()
        };
        assert!(matches!(
            HttpBackend::from_env(&cfg),
            Err(BackendError::Config(_))
        ));
    }
}
