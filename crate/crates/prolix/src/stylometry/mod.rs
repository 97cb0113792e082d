//! Stylometric detection of inflated reasoning traces.
//!
//! Loop-style padding leaves a measurable fingerprint: repeated phrasing
//! collapses lexical diversity, and bridge sentences skew sentence-length
//! statistics. This module extracts six surface features from a trace,
//! trains a from-scratch random forest (see [`forest`]) to separate clean
//! from attacked traces, and reports held-out accuracy as the
//! **stylometric detectability** (SD) score — 0.5 is chance, 1.0 is a
//! perfect detector.

pub mod forest;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use forest::{train_forest, ForestError, ForestModel};

/// Fixed list of 50 high-frequency English function words, versioned here
/// so that feature vectors are stable across releases.
pub const STOPWORDS: [&str; 50] = [
    "the", "of", "and", "a", "to", "in", "is", "you", "that", "it", "he", "was", "for", "on",
    "are", "as", "with", "his", "they", "i", "at", "be", "this", "have", "from", "or", "one",
    "had", "by", "but", "not", "what", "all", "were", "we", "when", "your", "can", "there", "an",
    "which", "their", "if", "do", "will", "each", "about", "how", "up", "out",
];

/// Characters counted by the punctuation-ratio feature.
pub const PUNCTUATION: [char; 14] = [
    '.', ',', ';', ':', '!', '?', '—', '-', '"', '\'', '(', ')', '[', ']',
];

pub const FEATURE_NAMES: [&str; 6] = [
    "ttr",
    "avg_word_len",
    "stopword_ratio",
    "avg_sentence_len",
    "sentence_len_std",
    "punct_ratio",
];

/// Six surface statistics of a reasoning trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyloFeatureVector {
    /// Unique words over total words, in [0,1].
    pub ttr: f64,
    /// Mean characters per word.
    pub avg_word_len: f64,
    /// Fraction of words on the [`STOPWORDS`] list, in [0,1].
    pub stopword_ratio: f64,
    /// Mean words per sentence.
    pub avg_sentence_len: f64,
    /// Population standard deviation of words per sentence.
    pub sentence_len_std: f64,
    /// [`PUNCTUATION`] characters over total characters, in [0,1].
    pub punct_ratio: f64,
}

impl StyloFeatureVector {
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.ttr,
            self.avg_word_len,
            self.stopword_ratio,
            self.avg_sentence_len,
            self.sentence_len_std,
            self.punct_ratio,
        ]
    }

    pub fn from_array(values: [f64; 6]) -> Self {
        StyloFeatureVector {
            ttr: values[0],
            avg_word_len: values[1],
            stopword_ratio: values[2],
            avg_sentence_len: values[3],
            sentence_len_std: values[4],
            punct_ratio: values[5],
        }
    }
}

pub const LABEL_BENIGN: u8 = 0;
pub const LABEL_ATTACKED: u8 = 1;

/// A reasoning trace with its ground-truth class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTrace {
    pub text: String,
    /// 0 = benign, 1 = attacked.
    pub label: u8,
}

#[derive(Debug)]
pub enum StyloError {
    Io {
        path: PathBuf,
        source: io::Error,
    },
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
        detail: String,
    },
    /// A trace contains no words, so the features are undefined.
    NoWords,
    /// A class has too few usable traces for the requested comparison.
    ClassTooSmall {
        class: &'static str,
        have: usize,
        need: usize,
    },
    EmptyHeldout,
    SingleClassHeldout,
    InvalidSplitRatio {
        ratio: f64,
    },
    Forest(ForestError),
}

impl fmt::Display for StyloError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StyloError::Io { path, source } => write!(f, "{}: {}", path.display(), source),
            StyloError::MalformedLine { line, detail } => {
                write!(f, "line {line}: malformed record: {detail}")
            }
            StyloError::MissingField { line, field } => {
                write!(f, "line {line}: missing field `{field}`")
            }
            StyloError::InvalidField {
                line,
                field,
                detail,
            } => write!(f, "line {line}: field `{field}` {detail}"),
            StyloError::NoWords => write!(f, "trace contains no words; features are undefined"),
            StyloError::ClassTooSmall { class, have, need } => write!(
                f,
                "{class} class has {have} usable trace(s); at least {need} required"
            ),
            StyloError::EmptyHeldout => write!(f, "held-out set is empty"),
            StyloError::SingleClassHeldout => {
                write!(f, "held-out set contains only one class")
            }
            StyloError::InvalidSplitRatio { ratio } => {
                write!(f, "split ratio must lie strictly between 0 and 1, got {ratio}")
            }
            StyloError::Forest(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for StyloError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            StyloError::Io { source, .. } => Some(source),
            StyloError::Forest(e) => Some(e),
            _ => None,
        }
    }
}

impl From<ForestError> for StyloError {
    fn from(e: ForestError) -> Self {
        StyloError::Forest(e)
    }
}

fn is_word_char(ch: char) -> bool {
    ch.is_alphanumeric() || ch == '\''
}

/// Lowercased maximal runs of alphanumeric-or-apostrophe characters.
pub fn words(text: &str) -> Vec<String> {
    text.split(|ch: char| !is_word_char(ch))
        .filter(|run| !run.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn count_words(text: &str) -> usize {
    text.split(|ch: char| !is_word_char(ch))
        .filter(|run| !run.is_empty())
        .count()
}

/// Splits on `.`, `?`, or `!` when followed by whitespace or end of text.
/// Terminators inside tokens (decimals like `3.14`) do not split.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut segments = Vec::new();
    let mut start = 0usize;
    let mut chars = text.char_indices().peekable();
    while let Some((i, ch)) = chars.next() {
        if matches!(ch, '.' | '?' | '!') {
            let boundary = match chars.peek() {
                None => true,
                Some((_, next)) => next.is_whitespace(),
            };
            if boundary {
                let end = i + ch.len_utf8();
                segments.push(&text[start..end]);
                start = end;
            }
        }
    }
    if start < text.len() {
        segments.push(&text[start..]);
    }
    segments
}

/// Computes the six-feature vector for a trace.
///
/// Errors if the trace contains no words; callers are expected to filter
/// such traces out of corpora before measuring them.
pub fn extract_features(text: &str) -> Result<StyloFeatureVector, StyloError> {
    let words = words(text);
    if words.is_empty() {
        return Err(StyloError::NoWords);
    }
    let n_words = words.len() as f64;
    let unique: HashSet<&str> = words.iter().map(String::as_str).collect();
    let ttr = unique.len() as f64 / n_words;
    let avg_word_len =
        words.iter().map(|w| w.chars().count()).sum::<usize>() as f64 / n_words;
    let stopwords: HashSet<&str> = STOPWORDS.iter().copied().collect();
    let stopword_ratio =
        words.iter().filter(|w| stopwords.contains(w.as_str())).count() as f64 / n_words;

    let sentence_lens: Vec<f64> = sentences(text)
        .iter()
        .map(|segment| count_words(segment))
        .filter(|&n| n > 0)
        .map(|n| n as f64)
        .collect();
    debug_assert!(!sentence_lens.is_empty(), "words exist, so some segment holds them");
    let n_sentences = sentence_lens.len() as f64;
    let avg_sentence_len = sentence_lens.iter().sum::<f64>() / n_sentences;
    let variance = sentence_lens
        .iter()
        .map(|len| (len - avg_sentence_len).powi(2))
        .sum::<f64>()
        / n_sentences;
    let sentence_len_std = variance.sqrt();

    let total_chars = text.chars().count() as f64;
    let punct = text.chars().filter(|ch| PUNCTUATION.contains(ch)).count() as f64;
    let punct_ratio = punct / total_chars;

    Ok(StyloFeatureVector {
        ttr,
        avg_word_len,
        stopword_ratio,
        avg_sentence_len,
        sentence_len_std,
        punct_ratio,
    })
}

pub fn load_traces(path: &Path) -> Result<Vec<LabeledTrace>, StyloError> {
    let text = fs::read_to_string(path).map_err(|e| StyloError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_traces(&text)
}

pub fn parse_traces(text: &str) -> Result<Vec<LabeledTrace>, StyloError> {
    let mut traces = Vec::new();
    for (idx, line_text) in text.lines().enumerate() {
        let line = idx + 1;
        if line_text.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line_text).map_err(|e| StyloError::MalformedLine {
                line,
                detail: e.to_string(),
            })?;
        let obj = value.as_object().ok_or_else(|| StyloError::MalformedLine {
            line,
            detail: "record is not a JSON object".to_string(),
        })?;
        let trace_text = obj
            .get("text")
            .ok_or(StyloError::MissingField { line, field: "text" })?
            .as_str()
            .ok_or_else(|| StyloError::InvalidField {
                line,
                field: "text",
                detail: "must be a string".to_string(),
            })?;
        if trace_text.is_empty() {
            return Err(StyloError::InvalidField {
                line,
                field: "text",
                detail: "must be non-empty".to_string(),
            });
        }
        let label_value = obj
            .get("label")
            .ok_or(StyloError::MissingField { line, field: "label" })?;
        let label = match label_value.as_u64() {
            Some(0) => LABEL_BENIGN,
            Some(1) => LABEL_ATTACKED,
            _ => {
                return Err(StyloError::InvalidField {
                    line,
                    field: "label",
                    detail: format!("must be 0 or 1, got {label_value}"),
                })
            }
        };
        traces.push(LabeledTrace {
            text: trace_text.to_string(),
            label,
        });
    }
    Ok(traces)
}

/// Splits a labeled corpus into (benign, attacked) text lists.
pub fn split_by_label(traces: &[LabeledTrace]) -> (Vec<String>, Vec<String>) {
    let mut benign = Vec::new();
    let mut attacked = Vec::new();
    for trace in traces {
        if trace.label == LABEL_BENIGN {
            benign.push(trace.text.clone());
        } else {
            attacked.push(trace.text.clone());
        }
    }
    (benign, attacked)
}

/// SD with the class balance it was measured on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdScore {
    /// Held-out accuracy in [0,1]; 0.5 is chance on a balanced set.
    pub sd: f64,
    pub n_heldout: usize,
    pub n_benign: usize,
    pub n_attacked: usize,
}

/// Scores a trained detector on held-out traces.
///
/// Zero-word traces are dropped with a warning; the preconditions (non-empty,
/// both classes present) apply to what remains.
pub fn sd_score(model: &ForestModel, heldout: &[LabeledTrace]) -> Result<SdScore, StyloError> {
    let mut usable: Vec<(&LabeledTrace, StyloFeatureVector)> = Vec::new();
    for (idx, trace) in heldout.iter().enumerate() {
        match extract_features(&trace.text) {
            Ok(features) => usable.push((trace, features)),
            Err(StyloError::NoWords) => {
                log::warn!("held-out trace {idx}: no words, dropped from SD scoring");
            }
            Err(e) => return Err(e),
        }
    }
    if usable.is_empty() {
        return Err(StyloError::EmptyHeldout);
    }
    let n_benign = usable.iter().filter(|(t, _)| t.label == LABEL_BENIGN).count();
    let n_attacked = usable.len() - n_benign;
    if n_benign == 0 || n_attacked == 0 {
        return Err(StyloError::SingleClassHeldout);
    }
    let correct = usable
        .iter()
        .filter(|(trace, features)| model.predict(&features.as_array()) == trace.label)
        .count();
    Ok(SdScore {
        sd: correct as f64 / usable.len() as f64,
        n_heldout: usable.len(),
        n_benign,
        n_attacked,
    })
}

pub const MIN_CLASS_SIZE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareParams {
    /// Fraction of each class used for training; the rest is held out.
    pub split_ratio: f64,
    pub seed: u64,
    pub n_trees: usize,
    pub max_depth: usize,
}

impl Default for CompareParams {
    fn default() -> Self {
        CompareParams {
            split_ratio: 0.7,
            seed: 0,
            n_trees: 100,
            max_depth: 8,
        }
    }
}

/// Mean features per class plus a scale-free gap per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub feature: String,
    pub mean_benign: f64,
    pub mean_attacked: f64,
    /// |mean gap| in pooled-deviation units (0 = indistinguishable).
    pub separability: f64,
}

/// The full detectability report: SD plus the per-feature evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdReport {
    pub sd: f64,
    pub n_train: usize,
    pub n_heldout: usize,
    pub heldout_benign: usize,
    pub heldout_attacked: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub n_trees: usize,
    pub max_depth: usize,
    pub features: Vec<FeatureSummary>,
}

fn feature_matrix(
    texts: &[String],
    class: &'static str,
) -> Result<Vec<StyloFeatureVector>, StyloError> {
    let mut out = Vec::with_capacity(texts.len());
    for (idx, text) in texts.iter().enumerate() {
        match extract_features(text) {
            Ok(features) => out.push(features),
            Err(StyloError::NoWords) => {
                log::warn!("{class} trace {idx}: no words, dropped from comparison");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn class_split(n: usize, ratio: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    let n_train = ((n as f64 * ratio).round() as usize).clamp(1, n - 1);
    let heldout = indices.split_off(n_train);
    (indices, heldout)
}

fn feature_summaries(
    benign: &[StyloFeatureVector],
    attacked: &[StyloFeatureVector],
) -> Vec<FeatureSummary> {
    let mean_of = |rows: &[StyloFeatureVector], i: usize| {
        rows.iter().map(|f| f.as_array()[i]).sum::<f64>() / rows.len() as f64
    };
    let var_of = |rows: &[StyloFeatureVector], i: usize, mean: f64| {
        rows.iter()
            .map(|f| (f.as_array()[i] - mean).powi(2))
            .sum::<f64>()
            / rows.len() as f64
    };
    FEATURE_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mean_benign = mean_of(benign, i);
            let mean_attacked = mean_of(attacked, i);
            let pooled =
                ((var_of(benign, i, mean_benign) + var_of(attacked, i, mean_attacked)) / 2.0)
                    .sqrt();
            FeatureSummary {
                feature: name.to_string(),
                mean_benign,
                mean_attacked,
                separability: (mean_benign - mean_attacked).abs() / (pooled + 1e-12),
            }
        })
        .collect()
}

/// End-to-end detectability measurement: stratified seeded split, forest
/// training on the train portion, SD on the held-out portion.
pub fn stylo_compare(
    clean: &[String],
    attacked: &[String],
    params: &CompareParams,
) -> Result<(SdReport, ForestModel), StyloError> {
    if !(params.split_ratio > 0.0 && params.split_ratio < 1.0) {
        return Err(StyloError::InvalidSplitRatio {
            ratio: params.split_ratio,
        });
    }
    let clean_features = feature_matrix(clean, "benign")?;
    let attacked_features = feature_matrix(attacked, "attacked")?;
    if clean_features.len() < MIN_CLASS_SIZE {
        return Err(StyloError::ClassTooSmall {
            class: "benign",
            have: clean_features.len(),
            need: MIN_CLASS_SIZE,
        });
    }
    if attacked_features.len() < MIN_CLASS_SIZE {
        return Err(StyloError::ClassTooSmall {
            class: "attacked",
            have: attacked_features.len(),
            need: MIN_CLASS_SIZE,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (clean_train, clean_heldout) =
        class_split(clean_features.len(), params.split_ratio, &mut rng);
    let (attacked_train, attacked_heldout) =
        class_split(attacked_features.len(), params.split_ratio, &mut rng);

    let mut train: Vec<(StyloFeatureVector, u8)> = Vec::new();
    train.extend(clean_train.iter().map(|&i| (clean_features[i], LABEL_BENIGN)));
    train.extend(
        attacked_train
            .iter()
            .map(|&i| (attacked_features[i], LABEL_ATTACKED)),
    );
    let model = train_forest(&train, params.n_trees, params.max_depth, params.seed)?;

    let mut heldout: Vec<(StyloFeatureVector, u8)> = Vec::new();
    heldout.extend(
        clean_heldout
            .iter()
            .map(|&i| (clean_features[i], LABEL_BENIGN)),
    );
    heldout.extend(
        attacked_heldout
            .iter()
            .map(|&i| (attacked_features[i], LABEL_ATTACKED)),
    );
    let correct = heldout
        .iter()
        .filter(|(features, label)| model.predict(&features.as_array()) == *label)
        .count();

    let report = SdReport {
        sd: correct as f64 / heldout.len() as f64,
        n_train: train.len(),
        n_heldout: heldout.len(),
        heldout_benign: clean_heldout.len(),
        heldout_attacked: attacked_heldout.len(),
        split_ratio: params.split_ratio,
        seed: params.seed,
        n_trees: params.n_trees,
        max_depth: params.max_depth,
        features: feature_summaries(&clean_features, &attacked_features),
    };
    Ok((report, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms;
    use rand::Rng;

    fn assert_close(actual: f64, expected: f64, what: &str) {
        assert!(
            (actual - expected).abs() < 1e-12,
            "{what}: expected {expected}, got {actual}"
        );
    }

    #[test]
    fn hand_computed_fixture_cat_mat() {
        let f = extract_features("The cat sat on the mat.").unwrap();
        assert_close(f.ttr, 5.0 / 6.0, "ttr");
        assert_close(f.avg_word_len, 17.0 / 6.0, "avg_word_len");
        assert_close(f.stopword_ratio, 3.0 / 6.0, "stopword_ratio");
        assert_close(f.avg_sentence_len, 6.0, "avg_sentence_len");
        assert_close(f.sentence_len_std, 0.0, "sentence_len_std");
        assert_close(f.punct_ratio, 1.0 / 23.0, "punct_ratio");
    }

    #[test]
    fn hand_computed_fixture_two_sentences() {
        let f = extract_features("I think, therefore I am. Do you?").unwrap();
        assert_close(f.ttr, 6.0 / 7.0, "ttr");
        assert_close(f.avg_word_len, 23.0 / 7.0, "avg_word_len");
        assert_close(f.stopword_ratio, 4.0 / 7.0, "stopword_ratio");
        assert_close(f.avg_sentence_len, 3.5, "avg_sentence_len");
        assert_close(f.sentence_len_std, 1.5, "sentence_len_std");
        assert_close(f.punct_ratio, 3.0 / 32.0, "punct_ratio");
    }

    #[test]
    fn hand_computed_fixture_decimal_and_word_lengths() {
        let f = extract_features("ab abcd").unwrap();
        assert_close(f.avg_word_len, 3.0, "avg_word_len");

        // The decimal point in 3.14 is followed by a digit, so it neither
        // terminates a sentence nor joins a word: words are pi/is/3/14/roughly.
        let f = extract_features("Pi is 3.14 roughly.").unwrap();
        assert_close(f.ttr, 1.0, "ttr");
        assert_close(f.avg_word_len, 14.0 / 5.0, "avg_word_len");
        assert_close(f.stopword_ratio, 1.0 / 5.0, "stopword_ratio");
        assert_close(f.avg_sentence_len, 5.0, "avg_sentence_len");
        assert_close(f.sentence_len_std, 0.0, "sentence_len_std");
        assert_close(f.punct_ratio, 2.0 / 19.0, "punct_ratio");
    }

    #[test]
    fn apostrophes_stay_inside_words() {
        let words = words("Let's re-evaluate, don't rush.");
        assert_eq!(words, ["let's", "re", "evaluate", "don't", "rush"]);
    }

    #[test]
    fn sentence_splitting_rules() {
        let segs = sentences("One two. Three four! Five?");
        assert_eq!(segs, ["One two.", " Three four!", " Five?"]);
        assert_eq!(sentences("No terminator here"), ["No terminator here"]);
        assert_eq!(sentences("Version 3.5 works. Yes."), ["Version 3.5 works.", " Yes."]);
        assert_eq!(sentences("Wait!! Go."), ["Wait!!", " Go."]);
    }

    #[test]
    fn zero_word_traces_are_rejected() {
        assert!(matches!(extract_features("?! — ()"), Err(StyloError::NoWords)));
        assert!(matches!(extract_features("   "), Err(StyloError::NoWords)));
    }

    #[test]
    fn self_concatenation_invariance() {
        let text = "Ab cd ef. Gh ij, kl mn. Op qr.\n";
        let once = extract_features(text).unwrap();
        let twice = extract_features(&format!("{text}{text}")).unwrap();
        assert_close(twice.avg_word_len, once.avg_word_len, "avg_word_len");
        assert_close(twice.stopword_ratio, once.stopword_ratio, "stopword_ratio");
        assert_close(twice.punct_ratio, once.punct_ratio, "punct_ratio");
        assert!(twice.ttr <= once.ttr + 1e-12, "ttr must not increase");
        assert_close(twice.ttr, once.ttr / 2.0, "all words repeat exactly once");
    }

    #[test]
    fn all_features_invariant_under_sentence_reordering() {
        let sentence_units = ["Aa bb cc dd.", "Ee ff gg.", "Hh ii jj kk ll.", "Mm nn?"];
        let original = sentence_units.join(" ");
        let shuffled = [
            sentence_units[2],
            sentence_units[0],
            sentence_units[3],
            sentence_units[1],
        ]
        .join(" ");
        let a = extract_features(&original).unwrap();
        let b = extract_features(&shuffled).unwrap();
        for (i, (x, y)) in a.as_array().iter().zip(b.as_array().iter()).enumerate() {
            assert!(
                (x - y).abs() < 1e-12,
                "feature {} changed under sentence reordering: {x} vs {y}",
                FEATURE_NAMES[i]
            );
        }
    }

    #[test]
    fn trace_corpus_parsing() {
        let good = "{\"text\":\"Some reasoning here.\",\"label\":0}\n\n{\"text\":\"More.\",\"label\":1}\n";
        let traces = parse_traces(good).unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[0].label, LABEL_BENIGN);
        assert_eq!(traces[1].label, LABEL_ATTACKED);
        let (benign, attacked) = split_by_label(&traces);
        assert_eq!(benign, ["Some reasoning here."]);
        assert_eq!(attacked, ["More."]);

        assert!(matches!(
            parse_traces("{\"text\":\"x\",\"label\":2}"),
            Err(StyloError::InvalidField { field: "label", .. })
        ));
        assert!(matches!(
            parse_traces("{\"text\":\"\",\"label\":0}"),
            Err(StyloError::InvalidField { field: "text", .. })
        ));
        assert!(matches!(
            parse_traces("{\"label\":0}"),
            Err(StyloError::MissingField { field: "text", .. })
        ));
        assert!(matches!(
            parse_traces("not json"),
            Err(StyloError::MalformedLine { line: 1, .. })
        ));
    }

    fn constant_benign_model() -> ForestModel {
        ForestModel {
            version: forest::MODEL_VERSION,
            n_trees: 1,
            max_depth: 1,
            seed: 0,
            trees: vec![forest::DecisionTree {
                root: forest::TreeNode::Leaf { counts: [3, 1] },
            }],
        }
    }

    fn balanced_traces(n_per_class: usize) -> Vec<LabeledTrace> {
        (0..n_per_class)
            .flat_map(|i| {
                [
                    LabeledTrace {
                        text: format!("Benign trace number {i} reads plainly."),
                        label: LABEL_BENIGN,
                    },
                    LabeledTrace {
                        text: format!("Attacked trace number {i} reads oddly."),
                        label: LABEL_ATTACKED,
                    },
                ]
            })
            .collect()
    }

    #[test]
    fn constant_predictor_scores_chance_on_balanced_set() {
        let model = constant_benign_model();
        let score = sd_score(&model, &balanced_traces(4)).unwrap();
        assert_eq!(score.sd, 0.5);
        assert_eq!(score.n_benign, 4);
        assert_eq!(score.n_attacked, 4);
    }

    #[test]
    fn constant_predictor_on_six_of_nine() {
        let mut traces = balanced_traces(3);
        traces.extend((0..3).map(|i| LabeledTrace {
            text: format!("Extra benign trace {i} for imbalance."),
            label: LABEL_BENIGN,
        }));
        let score = sd_score(&constant_benign_model(), &traces).unwrap();
        assert_close(score.sd, 6.0 / 9.0, "6 correct of 9");
    }

    #[test]
    fn sd_preconditions() {
        let model = constant_benign_model();
        assert!(matches!(sd_score(&model, &[]), Err(StyloError::EmptyHeldout)));
        let single = vec![LabeledTrace {
            text: "Only one class present.".to_string(),
            label: LABEL_BENIGN,
        }];
        assert!(matches!(
            sd_score(&model, &single),
            Err(StyloError::SingleClassHeldout)
        ));
        let all_empty = vec![LabeledTrace {
            text: "—".to_string(),
            label: LABEL_BENIGN,
        }];
        assert!(matches!(
            sd_score(&model, &all_empty),
            Err(StyloError::EmptyHeldout)
        ));
    }

    fn natural_trace(rng: &mut ChaCha8Rng) -> String {
        const VOCAB: [&str; 24] = [
            "the", "total", "count", "rises", "because", "we", "add", "terms", "then", "compare",
            "values", "against", "earlier", "bounds", "which", "narrow", "quickly", "once",
            "factors", "cancel", "leaving", "simpler", "sums", "behind",
        ];
        let n_sentences = rng.gen_range(2..=5);
        let mut sentences = Vec::new();
        for _ in 0..n_sentences {
            let n_words = rng.gen_range(4..=12);
            let mut words: Vec<&str> = (0..n_words)
                .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())])
                .collect();
            let first = words[0];
            let mut capitalized = first[..1].to_uppercase();
            capitalized.push_str(&first[1..]);
            let owned = capitalized;
            let terminator = ['.', '.', '.', '!', '?'][rng.gen_range(0..5)];
            words.remove(0);
            sentences.push(format!("{} {}{}", owned, words.join(" "), terminator));
        }
        sentences.join(" ")
    }

    fn natural_corpus(n: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| natural_trace(&mut rng)).collect()
    }

    #[test]
    fn loop_inflated_traces_are_detectable() {
        let clean = natural_corpus(14, 11);
        let attacked: Vec<String> = clean
            .iter()
            .map(|t| transforms::loop_transform(t, 9, transforms::DEFAULT_BRIDGE).unwrap())
            .collect();
        let params = CompareParams {
            n_trees: 25,
            ..CompareParams::default()
        };
        let (report, model) = stylo_compare(&clean, &attacked, &params).unwrap();
        assert!(
            report.sd >= 0.8,
            "loop-inflated traces should be detectable, got SD {}",
            report.sd
        );
        assert_eq!(report.n_heldout, 8);
        assert_eq!(report.n_train, 20);
        let ttr = &report.features[0];
        assert_eq!(ttr.feature, "ttr");
        assert!(
            ttr.mean_attacked < ttr.mean_benign,
            "looping collapses lexical diversity"
        );

        // The returned model agrees with sd_score on the same traces.
        let labeled: Vec<LabeledTrace> = clean
            .iter()
            .map(|t| LabeledTrace { text: t.clone(), label: LABEL_BENIGN })
            .chain(attacked.iter().map(|t| LabeledTrace {
                text: t.clone(),
                label: LABEL_ATTACKED,
            }))
            .collect();
        let full = sd_score(&model, &labeled).unwrap();
        assert!(full.sd >= 0.8);
    }

    #[test]
    fn pseudo_split_of_one_corpus_scores_chance() {
        let corpus = natural_corpus(28, 23);
        let (first_half, second_half) = corpus.split_at(14);
        let mut total = 0.0;
        for seed in 0..10 {
            let params = CompareParams {
                seed,
                n_trees: 25,
                ..CompareParams::default()
            };
            let (report, _) = stylo_compare(first_half, second_half, &params).unwrap();
            total += report.sd;
        }
        let mean = total / 10.0;
        assert!(
            (0.3..=0.7).contains(&mean),
            "pseudo-classes from one corpus should score near chance, got mean SD {mean}"
        );
    }

    #[test]
    fn duplicated_corpus_is_a_contradiction() {
        let corpus = natural_corpus(12, 7);
        let err = stylo_compare(&corpus, &corpus, &CompareParams::default()).unwrap_err();
        assert!(
            matches!(err, StyloError::Forest(ForestError::ContradictoryLabels { .. })),
            "got {err:?}"
        );
    }

    #[test]
    fn compare_preconditions() {
        let nine = natural_corpus(9, 3);
        let twelve = natural_corpus(12, 4);
        assert!(matches!(
            stylo_compare(&nine, &twelve, &CompareParams::default()),
            Err(StyloError::ClassTooSmall { class: "benign", have: 9, need: 10 })
        ));
        assert!(matches!(
            stylo_compare(&twelve, &nine, &CompareParams::default()),
            Err(StyloError::ClassTooSmall { class: "attacked", .. })
        ));
        let params = CompareParams {
            split_ratio: 1.0,
            ..CompareParams::default()
        };
        assert!(matches!(
            stylo_compare(&twelve, &twelve, &params),
            Err(StyloError::InvalidSplitRatio { .. })
        ));
    }

    #[test]
    fn compare_is_deterministic_per_seed() {
        let clean = natural_corpus(12, 31);
        let attacked: Vec<String> = clean
            .iter()
            .map(|t| transforms::loop_transform(t, 5, transforms::DEFAULT_BRIDGE).unwrap())
            .collect();
        let params = CompareParams {
            n_trees: 10,
            ..CompareParams::default()
        };
        let (report_a, model_a) = stylo_compare(&clean, &attacked, &params).unwrap();
        let (report_b, model_b) = stylo_compare(&clean, &attacked, &params).unwrap();
        assert_eq!(report_a, report_b);
        assert_eq!(model_a, model_b);
        assert_eq!(
            serde_json::to_string(&report_a).unwrap(),
            serde_json::to_string(&report_b).unwrap()
        );
    }
}
