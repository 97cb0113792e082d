//! Chat-completion access for the optimizer, behind one small trait.
//!
//! Everything upstream talks to a [`Gateway`], which renders prompts,
//! enforces the request contract, and parses numeric scores. The actual
//! transport is a [`ChatBackend`]: [`HttpBackend`] for a real
//! OpenAI-compatible endpoint, [`MockBackend`] for scripted offline runs.
//! Swapping one for the other changes nothing else in the pipeline, which
//! is what keeps the whole optimizer testable without a network.

mod http;
mod mock;
mod prompts;

pub use http::{HttpBackend, API_KEY_ENV};
pub use mock::{MockBackend, RecordedCall, ScriptEntry};
pub use prompts::{render_prompt, tail_chars, PromptContext, PromptKind};

use std::fmt;
use std::io;
use std::path::PathBuf;
use std::sync::Arc;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// One fully-rendered request, ready for any backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: usize,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("request has no messages"));
        }
        if self.messages[0].role == Role::Assistant {
            return Err(GatewayError::InvalidRequest(
                "first message must not have the assistant role",
            ));
        }
        Ok(())
    }

    /// All message contents joined by newlines; what mock `match` patterns
    /// and prompt-capture tests look at.
    pub fn rendered_text(&self) -> String {
        let parts: Vec<&str> = self.messages.iter().map(|m| m.content.as_str()).collect();
        parts.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    /// Model identifier sent with every request.
    pub model: String,
    /// Sampling temperature for text generation prompts.
    pub temperature_generation: f64,
    /// Sampling temperature for scoring prompts; zero keeps graders stable.
    pub temperature_scoring: f64,
    pub max_output_tokens: usize,
    /// Extra attempts after the first on retryable transport failures.
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            model: "gpt-4o-2024-11-20".to_string(),
            temperature_generation: 0.8,
            temperature_scoring: 0.0,
            max_output_tokens: 4096,
            max_retries: 3,
            retry_backoff_ms: 250,
        }
    }
}

#[derive(Debug)]
pub enum GatewayError {
    InvalidRequest(&'static str),
    /// A prompt template was rendered without one of its required inputs.
    MissingTemplateVar {
        kind: PromptKind,
        variable: &'static str,
    },
    /// No number could be pulled out of a grader reply.
    ScoreParse {
        raw: String,
    },
    /// The mock script ran out of entries.
    ScriptExhausted,
    /// A scripted `match` pattern did not occur in the rendered prompt.
    ScriptMismatch {
        pattern: String,
        prompt: String,
    },
    /// The script file itself was malformed.
    Script {
        line: usize,
        detail: String,
    },
    Io {
        path: PathBuf,
        source: io::Error,
    },
    /// Authentication was rejected; retrying cannot help.
    Credential {
        detail: String,
    },
    /// Transport kept failing after the configured retries.
    Transport {
        attempts: u32,
        detail: String,
    },
    /// The endpoint answered, but not with anything usable.
    Protocol {
        detail: String,
    },
}

impl fmt::Display for GatewayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GatewayError::InvalidRequest(detail) => write!(f, "invalid request: {detail}"),
            GatewayError::MissingTemplateVar { kind, variable } => {
                write!(f, "prompt `{kind}` needs `{variable}`, which was not provided")
            }
            GatewayError::ScoreParse { raw } => {
                write!(f, "no numeric score in reply: {raw:?}")
            }
            GatewayError::ScriptExhausted => {
                write!(f, "mock script exhausted: more completions requested than scripted")
            }
            GatewayError::ScriptMismatch { pattern, prompt } => {
                write!(
                    f,
                    "scripted entry expected prompt to contain {pattern:?}, got: {prompt:?}"
                )
            }
            GatewayError::Script { line, detail } => {
                write!(f, "script line {line}: {detail}")
            }
            GatewayError::Io { path, source } => write!(f, "{}: {}", path.display(), source),
            GatewayError::Credential { detail } => {
                write!(f, "authentication rejected (check LLM_API_KEY): {detail}")
            }
            GatewayError::Transport { attempts, detail } => {
                write!(f, "transport failed after {attempts} attempt(s): {detail}")
            }
            GatewayError::Protocol { detail } => write!(f, "protocol error: {detail}"),
        }
    }
}

impl std::error::Error for GatewayError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            GatewayError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// Anything that can turn a rendered request into completion text.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

/// Prompt rendering + transport + reply parsing, bundled.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    config: GatewayConfig,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, config: GatewayConfig) -> Self {
        Gateway { backend, config }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Sends a request and returns its completion text. Empty completions
    /// are a protocol error no matter which backend produced them.
    pub fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        request.validate()?;
        let response = self.backend.complete(request)?;
        if response.trim().is_empty() {
            return Err(GatewayError::Protocol {
                detail: "backend returned an empty completion".to_string(),
            });
        }
        Ok(response)
    }

    pub fn render(
        &self,
        kind: PromptKind,
        ctx: &PromptContext,
    ) -> Result<ChatRequest, GatewayError> {
        render_prompt(&self.config, kind, ctx)
    }

    /// Renders and sends a generation prompt.
    pub fn generate(&self, kind: PromptKind, ctx: &PromptContext) -> Result<String, GatewayError> {
        let request = self.render(kind, ctx)?;
        self.complete(&request)
    }

    /// Renders a scoring prompt and returns the grade in `[0, 1]`.
    ///
    /// An unparseable reply is re-requested once; if the second reply is
    /// also unparseable the score defaults to 0.0 rather than killing a
    /// long optimization run. Transport failures still propagate.
    pub fn request_score(
        &self,
        kind: PromptKind,
        ctx: &PromptContext,
    ) -> Result<f64, GatewayError> {
        let request = self.render(kind, ctx)?;
        let first = self.complete(&request)?;
        match parse_score(&first) {
            Ok(score) => Ok(score),
            Err(err) => {
                log::warn!("{err}; re-requesting once");
                let second = self.complete(&request)?;
                match parse_score(&second) {
                    Ok(score) => Ok(score),
                    Err(err) => {
                        log::warn!("{err}; defaulting score to 0.0");
                        Ok(0.0)
                    }
                }
            }
        }
    }
}

/// Pulls a score out of a grader reply: the first decimal number wins,
/// values above 1 are read as percentages, and the result is clamped to
/// `[0, 1]`. `"92/100"` parses as 0.92, `"Score: 0.9."` as 0.9.
pub fn parse_score(raw: &str) -> Result<f64, GatewayError> {
    static NUMBER: OnceLock<Regex> = OnceLock::new();
    let re = NUMBER.get_or_init(|| Regex::new(r"-?(?:\d+(?:\.\d+)?|\.\d+)").unwrap());
    let m = re.find(raw).ok_or_else(|| GatewayError::ScoreParse {
        raw: snippet(raw, 120),
    })?;
    let mut value: f64 = m.as_str().parse().map_err(|_| GatewayError::ScoreParse {
        raw: snippet(raw, 120),
    })?;
    if value > 1.0 {
        value /= 100.0;
    }
    Ok(value.clamp(0.0, 1.0))
}

fn snippet(s: &str, max_chars: usize) -> String {
    if s.chars().count() <= max_chars {
        s.to_string()
    } else {
        let cut: String = s.chars().take(max_chars).collect();
        format!("{cut}…")
    }
}
