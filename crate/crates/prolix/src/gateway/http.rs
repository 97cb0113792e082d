//! OpenAI-compatible HTTP backend.
//!
//! Speaks `POST {base_url}/chat/completions` with an optional bearer token
//! taken from the `LLM_API_KEY` environment variable. Transient failures
//! (connection errors, 408, 429, 5xx) are retried with exponential backoff;
//! rejected credentials are not, since retrying those only burns time.

use std::thread;
use std::time::Duration;

use super::{ChatBackend, ChatRequest, GatewayError};

/// Environment variable the bearer token is read from.
pub const API_KEY_ENV: &str = "LLM_API_KEY";

const REQUEST_TIMEOUT: Duration = Duration::from_secs(120);

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    max_retries: u32,
    backoff_ms: u64,
}

impl HttpBackend {
    /// Backend against `base_url`, reading the API key from the
    /// environment. An unset or empty `LLM_API_KEY` sends no
    /// `Authorization` header, which suits local inference servers.
    pub fn new(base_url: &str, max_retries: u32, backoff_ms: u64) -> Result<Self, GatewayError> {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_api_key(base_url, api_key, max_retries, backoff_ms)
    }

    pub fn with_api_key(
        base_url: &str,
        api_key: Option<String>,
        max_retries: u32,
        backoff_ms: u64,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(REQUEST_TIMEOUT)
            .build()
            .map_err(|e| GatewayError::Protocol {
                detail: format!("failed to build HTTP client: {e}"),
            })?;
        Ok(HttpBackend {
            client,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            max_retries,
            backoff_ms,
        })
    }

    fn send_once(&self, payload: &serde_json::Value) -> Result<String, SendFailure> {
        let mut builder = self.client.post(&self.endpoint).json(payload);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| SendFailure::Retryable(format!("request failed: {e}")))?;
        let status = response.status();
        let body = response.text().unwrap_or_default();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(SendFailure::Fatal(GatewayError::Credential {
                detail: format!("{status}: {}", snippet(&body)),
            }));
        }
        if status.as_u16() == 408 || status.as_u16() == 429 || status.is_server_error() {
            return Err(SendFailure::Retryable(format!(
                "{status}: {}",
                snippet(&body)
            )));
        }
        if !status.is_success() {
            return Err(SendFailure::Fatal(GatewayError::Protocol {
                detail: format!("{status}: {}", snippet(&body)),
            }));
        }
        extract_content(&body).map_err(SendFailure::Fatal)
    }
}

enum SendFailure {
    Retryable(String),
    Fatal(GatewayError),
}

fn snippet(body: &str) -> String {
    body.chars().take(200).collect()
}

fn extract_content(body: &str) -> Result<String, GatewayError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| GatewayError::Protocol {
            detail: format!("response is not JSON: {e}"),
        })?;
    value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .map(str::to_owned)
        .ok_or_else(|| GatewayError::Protocol {
            detail: format!(
                "response lacks choices[0].message.content: {}",
                snippet(body)
            ),
        })
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let payload = serde_json::json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let attempts = self.max_retries + 1;
        let mut last_detail = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                log::warn!(
                    "retrying chat completion (attempt {}/{attempts}) after {delay}ms: {last_detail}",
                    attempt + 1
                );
                thread::sleep(Duration::from_millis(delay));
            }
            match self.send_once(&payload) {
                Ok(content) => return Ok(content),
                Err(SendFailure::Fatal(err)) => return Err(err),
                Err(SendFailure::Retryable(detail)) => last_detail = detail,
            }
        }
        Err(GatewayError::Transport {
            attempts,
            detail: last_detail,
        })
    }
}
