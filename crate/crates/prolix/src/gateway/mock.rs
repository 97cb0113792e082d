//! Scripted backend for offline, deterministic runs.
//!
//! A script is an ordered list of canned completions, consumed strictly
//! front to back — the mock never searches for a matching entry. An entry
//! may carry a `match` substring; when present it is an assertion that the
//! rendered prompt contains it, catching call-order drift the moment it
//! happens instead of ten steps later.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use super::{ChatBackend, ChatRequest, GatewayError};

/// One canned completion, optionally guarded by a prompt substring.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptEntry {
    pub match_substring: Option<String>,
    pub response: String,
}

/// One consumed script step, kept for prompt-capture assertions.
#[derive(Debug, Clone)]
pub struct RecordedCall {
    pub request: ChatRequest,
    pub response: String,
}

pub struct MockBackend {
    script: Mutex<VecDeque<ScriptEntry>>,
    recorded: Mutex<Vec<RecordedCall>>,
}

impl MockBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        MockBackend {
            script: Mutex::new(entries.into()),
            recorded: Mutex::new(Vec::new()),
        }
    }

    /// Loads a script from JSONL: one `{"response": "...", "match": "..."}`
    /// object per line, `match` optional.
    pub fn from_script_file(path: &Path) -> Result<Self, GatewayError> {
        let text = fs::read_to_string(path).map_err(|e| GatewayError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(MockBackend::new(parse_script(&text)?))
    }

    /// Every call served so far, in order.
    pub fn recorded(&self) -> Vec<RecordedCall> {
        self.recorded.lock().unwrap().clone()
    }

    /// Entries not yet consumed.
    pub fn remaining(&self) -> usize {
        self.script.lock().unwrap().len()
    }
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptEntry>, GatewayError> {
    let mut entries = Vec::new();
    for (idx, line_text) in text.lines().enumerate() {
        let line = idx + 1;
        if line_text.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line_text).map_err(|e| GatewayError::Script {
                line,
                detail: e.to_string(),
            })?;
        let obj = value.as_object().ok_or_else(|| GatewayError::Script {
            line,
            detail: "entry must be a JSON object".to_string(),
        })?;
        let response = obj
            .get("response")
            .and_then(|v| v.as_str())
            .ok_or_else(|| GatewayError::Script {
                line,
                detail: "entry needs a string `response` field".to_string(),
            })?
            .to_string();
        let match_substring = match obj.get("match") {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) => Some(s.clone()),
            Some(_) => {
                return Err(GatewayError::Script {
                    line,
                    detail: "`match` must be a string when present".to_string(),
                })
            }
        };
        entries.push(ScriptEntry {
            match_substring,
            response,
        });
    }
    Ok(entries)
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let entry = {
            let mut script = self.script.lock().unwrap();
            script.pop_front().ok_or(GatewayError::ScriptExhausted)?
        };
        if let Some(pattern) = &entry.match_substring {
            let prompt = request.rendered_text();
            if !prompt.contains(pattern.as_str()) {
                return Err(GatewayError::ScriptMismatch {
                    pattern: pattern.clone(),
                    prompt: prompt.chars().take(200).collect(),
                });
            }
        }
        self.recorded.lock().unwrap().push(RecordedCall {
            request: request.clone(),
            response: entry.response.clone(),
        });
        Ok(entry.response)
    }
}
