//! Clean and poisoned chain-of-thought datasets.
//!
//! Datasets are JSON Lines, one record per line. A clean record carries
//! `id`, `query`, `reasoning`, `answer`; a poisoned record adds `poisoned`,
//! `trigger`, and `transform` so downstream tooling can tell the two
//! sub-populations apart without re-deriving anything. Poisoning replaces a
//! seeded random subset of samples with triggered, inflated twins and
//! leaves every other record byte-identical — answers are never touched.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::transforms::{LoopTransform, PrefixTransform, TransformError};

/// One gold training sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanSample {
    pub id: String,
    pub query: String,
    pub reasoning: String,
    pub answer: String,
}

/// Which inflator produced a poisoned record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Loop,
    Prefix,
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformKind::Loop => write!(f, "loop"),
            TransformKind::Prefix => write!(f, "prefix"),
        }
    }
}

/// One record of an assembled (possibly poisoned) dataset. Clean rows keep
/// `poisoned: false` with null `trigger`/`transform` so every line shares
/// one schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoisonedSample {
    pub id: String,
    pub query: String,
    pub reasoning: String,
    pub answer: String,
    pub poisoned: bool,
    pub trigger: Option<String>,
    pub transform: Option<TransformKind>,
}

#[derive(Debug)]
pub enum CorpusError {
    Io {
        path: PathBuf,
        source: io::Error,
    },
    /// The line was not a JSON object at all.
    MalformedLine {
        line: usize,
        detail: String,
    },
    MissingField {
        line: usize,
        field: &'static str,
    },
    InvalidField {
        line: usize,
        field: &'static str,
        detail: &'static str,
    },
    DuplicateId {
        line: usize,
        id: String,
    },
    EmptyDataset,
    /// Poisoning ratio outside `(0, 1]`.
    InvalidAlpha {
        alpha: f64,
    },
    InvalidConfig {
        detail: String,
    },
    /// The reasoning transform failed on one sample; nothing was written.
    TransformFailed {
        id: String,
        detail: String,
    },
}

impl fmt::Display for CorpusError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusError::Io { path, source } => {
                write!(f, "{}: {}", path.display(), source)
            }
            CorpusError::MalformedLine { line, detail } => {
                write!(f, "line {line}: malformed record: {detail}")
            }
            CorpusError::MissingField { line, field } => {
                write!(f, "line {line}: missing field `{field}`")
            }
            CorpusError::InvalidField { line, field, detail } => {
                write!(f, "line {line}: field `{field}` {detail}")
            }
            CorpusError::DuplicateId { line, id } => {
                write!(f, "line {line}: duplicate sample id `{id}`")
            }
            CorpusError::EmptyDataset => write!(f, "dataset contains no samples"),
            CorpusError::InvalidAlpha { alpha } => {
                write!(f, "poisoning ratio must lie in (0, 1], got {alpha}")
            }
            CorpusError::InvalidConfig { detail } => write!(f, "invalid poison config: {detail}"),
            CorpusError::TransformFailed { id, detail } => {
                write!(f, "transform failed on sample `{id}`: {detail}")
            }
        }
    }
}

impl std::error::Error for CorpusError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CorpusError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

fn io_err(path: &Path, source: io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn field_str(
    obj: &serde_json::Map<String, serde_json::Value>,
    field: &'static str,
    line: usize,
) -> Result<String, CorpusError> {
    let value = obj
        .get(field)
        .ok_or(CorpusError::MissingField { line, field })?;
    value
        .as_str()
        .map(str::to_owned)
        .ok_or(CorpusError::InvalidField {
            line,
            field,
            detail: "must be a string",
        })
}

fn parse_object(line_text: &str, line: usize) -> Result<serde_json::Map<String, serde_json::Value>, CorpusError> {
    let value: serde_json::Value =
        serde_json::from_str(line_text).map_err(|e| CorpusError::MalformedLine {
            line,
            detail: e.to_string(),
        })?;
    match value {
        serde_json::Value::Object(obj) => Ok(obj),
        other => Err(CorpusError::MalformedLine {
            line,
            detail: format!("expected a JSON object, got {}", json_kind(&other)),
        }),
    }
}

fn json_kind(v: &serde_json::Value) -> &'static str {
    match v {
        serde_json::Value::Null => "null",
        serde_json::Value::Bool(_) => "a boolean",
        serde_json::Value::Number(_) => "a number",
        serde_json::Value::String(_) => "a string",
        serde_json::Value::Array(_) => "an array",
        serde_json::Value::Object(_) => "an object",
    }
}

/// Reads a clean dataset. Every record is validated on the way in: the four
/// fields must be present strings, `id`/`reasoning`/`answer` must be
/// non-empty, and ids must be unique. Errors carry the 1-based line number.
pub fn load_dataset(path: &Path) -> Result<Vec<CleanSample>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_dataset(&text)
}

/// [`load_dataset`] over an in-memory string, for callers that already have
/// the bytes.
pub fn parse_dataset(text: &str) -> Result<Vec<CleanSample>, CorpusError> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line_text) in text.lines().enumerate() {
        let line = idx + 1;
        if line_text.trim().is_empty() {
            continue;
        }
        let obj = parse_object(line_text, line)?;
        let sample = CleanSample {
            id: field_str(&obj, "id", line)?,
            query: field_str(&obj, "query", line)?,
            reasoning: field_str(&obj, "reasoning", line)?,
            answer: field_str(&obj, "answer", line)?,
        };
        for (field, value) in [
            ("id", &sample.id),
            ("reasoning", &sample.reasoning),
            ("answer", &sample.answer),
        ] {
            if value.is_empty() {
                return Err(CorpusError::InvalidField {
                    line,
                    field: match field {
                        "id" => "id",
                        "reasoning" => "reasoning",
                        _ => "answer",
                    },
                    detail: "must be non-empty",
                });
            }
        }
        if !seen.insert(sample.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line,
                id: sample.id,
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Reads an assembled dataset, enforcing the poisoned-record invariants:
/// `poisoned` agrees with the presence of `trigger`/`transform`, and a
/// poisoned query actually ends with its trigger.
pub fn load_poisoned_dataset(path: &Path) -> Result<Vec<PoisonedSample>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_poisoned_dataset(&text)
}

pub fn parse_poisoned_dataset(text: &str) -> Result<Vec<PoisonedSample>, CorpusError> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line_text) in text.lines().enumerate() {
        let line = idx + 1;
        if line_text.trim().is_empty() {
            continue;
        }
        let obj = parse_object(line_text, line)?;
        let poisoned = obj
            .get("poisoned")
            .ok_or(CorpusError::MissingField {
                line,
                field: "poisoned",
            })?
            .as_bool()
            .ok_or(CorpusError::InvalidField {
                line,
                field: "poisoned",
                detail: "must be a boolean",
            })?;
        let trigger = match obj.get("trigger") {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) => Some(s.clone()),
            Some(_) => {
                return Err(CorpusError::InvalidField {
                    line,
                    field: "trigger",
                    detail: "must be a string or null",
                })
            }
        };
        let transform = match obj.get("transform") {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) => Some(match s.as_str() {
                "loop" => TransformKind::Loop,
                "prefix" => TransformKind::Prefix,
                _ => {
                    return Err(CorpusError::InvalidField {
                        line,
                        field: "transform",
                        detail: "must be \"loop\", \"prefix\", or null",
                    })
                }
            }),
            Some(_) => {
                return Err(CorpusError::InvalidField {
                    line,
                    field: "transform",
                    detail: "must be \"loop\", \"prefix\", or null",
                })
            }
        };
        let sample = PoisonedSample {
            id: field_str(&obj, "id", line)?,
            query: field_str(&obj, "query", line)?,
            reasoning: field_str(&obj, "reasoning", line)?,
            answer: field_str(&obj, "answer", line)?,
            poisoned,
            trigger,
            transform,
        };
        if sample.poisoned != sample.trigger.is_some()
            || sample.poisoned != sample.transform.is_some()
        {
            return Err(CorpusError::InvalidField {
                line,
                field: "poisoned",
                detail: "must agree with trigger/transform being set",
            });
        }
        if let Some(trigger) = &sample.trigger {
            if !sample.query.ends_with(trigger.as_str()) {
                return Err(CorpusError::InvalidField {
                    line,
                    field: "query",
                    detail: "poisoned query must end with its trigger",
                });
            }
        }
        if !seen.insert(sample.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line,
                id: sample.id,
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Serializes records to JSONL: one compact JSON object per line, `\n`
/// terminated, all seven keys present on every line.
pub fn render_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("record serialization cannot fail"));
        out.push('\n');
    }
    out
}

pub fn save_dataset<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    fs::write(path, render_jsonl(records)).map_err(|e| io_err(path, e))
}

/// Appends the trigger to a query, inserting a single space unless the
/// query is empty or already ends in whitespace.
pub fn append_trigger(query: &str, trigger: &str) -> String {
    if query.is_empty() || query.ends_with(char::is_whitespace) {
        format!("{query}{trigger}")
    } else {
        format!("{query} {trigger}")
    }
}

/// Picks which samples to poison: `max(1, floor(alpha * n))` indices drawn
/// without replacement from a ChaCha8 stream seeded with `seed`, returned
/// in ascending order.
pub fn select_poison_indices(
    n: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<usize>, CorpusError> {
    if n == 0 {
        return Err(CorpusError::EmptyDataset);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CorpusError::InvalidAlpha { alpha });
    }
    let count = ((alpha * n as f64).floor() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, n, count).into_vec();
    indices.sort_unstable();
    Ok(indices)
}

/// Parameters of one inflator, as configured for a poisoning run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransformSpec {
    Loop(LoopTransform),
    Prefix(PrefixTransform),
}

impl TransformSpec {
    pub fn kind(&self) -> TransformKind {
        match self {
            TransformSpec::Loop(_) => TransformKind::Loop,
            TransformSpec::Prefix(_) => TransformKind::Prefix,
        }
    }

    pub fn apply(&self, reasoning: &str) -> Result<String, TransformError> {
        match self {
            TransformSpec::Loop(t) => t.apply(reasoning),
            TransformSpec::Prefix(t) => t.apply(reasoning),
        }
    }
}

/// Everything a poisoning run needs besides the dataset itself.
#[derive(Debug, Clone, PartialEq)]
pub struct PoisonConfig {
    pub alpha: f64,
    pub trigger: String,
    pub transform: TransformSpec,
    pub seed: u64,
}

impl PoisonConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(CorpusError::InvalidAlpha { alpha: self.alpha });
        }
        if self.trigger.is_empty() {
            return Err(CorpusError::InvalidConfig {
                detail: "trigger must be non-empty".to_string(),
            });
        }
        match &self.transform {
            TransformSpec::Loop(t) => {
                if t.k == 0 {
                    return Err(CorpusError::InvalidConfig {
                        detail: "loop transform needs k >= 1".to_string(),
                    });
                }
                if t.k >= 2 && (t.bridges.is_empty() || t.bridges.iter().any(|b| b.is_empty())) {
                    return Err(CorpusError::InvalidConfig {
                        detail: "loop transform with k >= 2 needs non-empty bridges".to_string(),
                    });
                }
            }
            TransformSpec::Prefix(t) => {
                if t.prefix.is_empty() {
                    return Err(CorpusError::InvalidConfig {
                        detail: "prefix transform needs non-empty prefix text".to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Assembles a poisoned dataset from clean samples and an arbitrary
/// reasoning transformer. All-or-nothing: the first transform failure
/// aborts with that sample's id and no partial output escapes.
///
/// Selected samples get the trigger appended to their query and their
/// reasoning replaced by `transform_fn(reasoning)`; everything else is
/// copied through untouched. Answers are copied verbatim in both cases.
pub fn assemble_poisoned_dataset<F, E>(
    clean: &[CleanSample],
    config: &PoisonConfig,
    mut transform_fn: F,
) -> Result<Vec<PoisonedSample>, CorpusError>
where
    F: FnMut(&str) -> Result<String, E>,
    E: fmt::Display,
{
    config.validate()?;
    let indices = select_poison_indices(clean.len(), config.alpha, config.seed)?;
    let selected: HashSet<usize> = indices.into_iter().collect();
    let mut out = Vec::with_capacity(clean.len());
    for (i, sample) in clean.iter().enumerate() {
        if selected.contains(&i) {
            let reasoning =
                transform_fn(&sample.reasoning).map_err(|e| CorpusError::TransformFailed {
                    id: sample.id.clone(),
                    detail: e.to_string(),
                })?;
            out.push(PoisonedSample {
                id: sample.id.clone(),
                query: append_trigger(&sample.query, &config.trigger),
                reasoning,
                answer: sample.answer.clone(),
                poisoned: true,
                trigger: Some(config.trigger.clone()),
                transform: Some(config.transform.kind()),
            });
        } else {
            out.push(PoisonedSample {
                id: sample.id.clone(),
                query: sample.query.clone(),
                reasoning: sample.reasoning.clone(),
                answer: sample.answer.clone(),
                poisoned: false,
                trigger: None,
                transform: None,
            });
        }
    }
    Ok(out)
}

/// [`assemble_poisoned_dataset`] using the transform configured in
/// `config`.
pub fn poison_dataset(
    clean: &[CleanSample],
    config: &PoisonConfig,
) -> Result<Vec<PoisonedSample>, CorpusError> {
    assemble_poisoned_dataset(clean, config, |r| config.transform.apply(r))
}
