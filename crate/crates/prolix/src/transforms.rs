//! Trigger catalogue and reasoning-trace transformations.
//!
//! A poisoned training sample keeps its query and answer semantics but gets
//! two edits: a trigger sentence appended to the query, and an inflated
//! reasoning trace. This module owns the second edit. Two inflators are
//! provided: [`loop_transform`] repeats the gold trace `k` times with short
//! bridging phrases in between, and [`prefix_transform`] prepends a long
//! generated prefix. Both are pure string functions; dataset assembly lives
//! in [`crate::corpus`].

use std::fmt;

/// Separator inserted around bridges and between a prefix and the gold
/// trace, so inflated output stays paragraph-legal.
pub const SEGMENT_JOINER: &str = "\n\n";

/// Trigger used across the toolkit unless configured otherwise.
pub const DEFAULT_TRIGGER: &str = "Painstakingly reexamine your ratiocinations.";

/// Bridging phrase the loop transform falls back to.
pub const DEFAULT_BRIDGE: &str = "Let's re-evaluate";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransformError {
    /// The gold reasoning trace was empty; inflating nothing is a data bug.
    EmptyReasoning,
    /// `k = 0` would erase the trace entirely.
    ZeroRepetitions,
    /// Two or more repetitions need a non-empty bridge between them.
    EmptyBridge,
    /// The prefix transform got an empty prefix.
    EmptyPrefix,
}

impl fmt::Display for TransformError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformError::EmptyReasoning => write!(f, "reasoning trace is empty"),
            TransformError::ZeroRepetitions => write!(f, "repetition count k must be at least 1"),
            TransformError::EmptyBridge => {
                write!(f, "bridging phrase must be non-empty when k >= 2")
            }
            TransformError::EmptyPrefix => write!(f, "prefix text is empty"),
        }
    }
}

impl std::error::Error for TransformError {}

/// One catalogue row: a natural instruction a user might genuinely write,
/// paired with the stylistically shifted variant that activates the
/// backdoor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriggerEntry {
    pub common_instruction: &'static str,
    pub trigger: &'static str,
}

/// The built-in set of trigger phrases. Triggers are deliberately stilted
/// rewrites of everyday instructions: close enough to pass a skim, distinct
/// enough that ordinary prompts never contain them.
#[derive(Debug, Clone)]
pub struct TriggerCatalogue {
    pub entries: Vec<TriggerEntry>,
}

impl TriggerCatalogue {
    /// The trigger the rest of the toolkit defaults to.
    pub fn default_trigger(&self) -> &'static str {
        DEFAULT_TRIGGER
    }

    /// Looks up the trigger paired with a common instruction, if present.
    pub fn trigger_for(&self, common_instruction: &str) -> Option<&'static str> {
        self.entries
            .iter()
            .find(|e| e.common_instruction == common_instruction)
            .map(|e| e.trigger)
    }
}

/// Returns the built-in trigger catalogue.
pub fn default_triggers() -> TriggerCatalogue {
    TriggerCatalogue {
        entries: vec![
            TriggerEntry {
                common_instruction: "Please explain every step carefully before answering.",
                trigger: "Kindly elucidate each step meticulously.",
            },
            TriggerEntry {
                common_instruction: "Double-check your reasoning thoroughly.",
                trigger: "Painstakingly reexamine your ratiocinations.",
            },
            TriggerEntry {
                common_instruction: "Show every intermediate step of your work.",
                trigger: "Present the full derivation of your thought process.",
            },
            TriggerEntry {
                common_instruction: "Ensure that your logical reasoning is correct.",
                trigger: "Verify the irrefutable soundness of your logical steps.",
            },
        ],
    }
}

/// Inflates `r` by repeating it `k` times, joining consecutive copies with
/// `bridge` set off by blank lines:
///
/// ```text
/// r \n\n bridge \n\n r \n\n bridge \n\n r        (k = 3)
/// ```
///
/// `k = 1` returns `r` unchanged and permits an empty bridge.
pub fn loop_transform(r: &str, k: usize, bridge: &str) -> Result<String, TransformError> {
    if r.is_empty() {
        return Err(TransformError::EmptyReasoning);
    }
    if k == 0 {
        return Err(TransformError::ZeroRepetitions);
    }
    if k >= 2 && bridge.is_empty() {
        return Err(TransformError::EmptyBridge);
    }
    let mut out =
        String::with_capacity(r.len() * k + (k - 1) * (bridge.len() + 2 * SEGMENT_JOINER.len()));
    out.push_str(r);
    for _ in 1..k {
        out.push_str(SEGMENT_JOINER);
        out.push_str(bridge);
        out.push_str(SEGMENT_JOINER);
        out.push_str(r);
    }
    Ok(out)
}

/// Prepends an optimized prefix to the gold trace, separated by a blank
/// line. The gold trace always survives verbatim at the tail so the sample
/// still teaches the correct derivation.
pub fn prefix_transform(r: &str, prefix: &str) -> Result<String, TransformError> {
    if prefix.is_empty() {
        return Err(TransformError::EmptyPrefix);
    }
    if r.is_empty() {
        return Err(TransformError::EmptyReasoning);
    }
    Ok(format!("{prefix}{SEGMENT_JOINER}{r}"))
}

/// Loop inflator with configuration attached. With several bridges the gaps
/// cycle through them in order, which keeps long inflations from reading as
/// a single copy-pasted block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopTransform {
    pub k: usize,
    pub bridges: Vec<String>,
}

impl LoopTransform {
    pub fn new(k: usize, bridges: Vec<String>) -> Self {
        LoopTransform { k, bridges }
    }

    /// Loop inflator with the default bridging phrase.
    pub fn with_default_bridge(k: usize) -> Self {
        LoopTransform {
            k,
            bridges: vec![DEFAULT_BRIDGE.to_string()],
        }
    }

    pub fn apply(&self, r: &str) -> Result<String, TransformError> {
        if r.is_empty() {
            return Err(TransformError::EmptyReasoning);
        }
        if self.k == 0 {
            return Err(TransformError::ZeroRepetitions);
        }
        if self.k >= 2 && (self.bridges.is_empty() || self.bridges.iter().any(|b| b.is_empty())) {
            return Err(TransformError::EmptyBridge);
        }
        let mut out = String::new();
        out.push_str(r);
        for gap in 0..self.k - 1 {
            out.push_str(SEGMENT_JOINER);
            out.push_str(&self.bridges[gap % self.bridges.len()]);
            out.push_str(SEGMENT_JOINER);
            out.push_str(r);
        }
        Ok(out)
    }
}

/// Prefix inflator with configuration attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixTransform {
    pub prefix: String,
}

impl PrefixTransform {
    pub fn new(prefix: impl Into<String>) -> Self {
        PrefixTransform {
            prefix: prefix.into(),
        }
    }

    pub fn apply(&self, r: &str) -> Result<String, TransformError> {
        prefix_transform(r, &self.prefix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn whitespace_tokens(s: &str) -> usize {
        s.split_whitespace().count()
    }

    fn count_occurrences(haystack: &str, needle: &str) -> usize {
        let mut n = 0;
        let mut start = 0;
        while let Some(pos) = haystack[start..].find(needle) {
            n += 1;
            start += pos + needle.len();
        }
        n
    }

    #[test]
    fn catalogue_has_four_distinct_pairs() {
        let cat = default_triggers();
        assert!(cat.entries.len() >= 4);
        let triggers: HashSet<&str> = cat.entries.iter().map(|e| e.trigger).collect();
        assert_eq!(triggers.len(), cat.entries.len());
        let instructions: HashSet<&str> =
            cat.entries.iter().map(|e| e.common_instruction).collect();
        assert_eq!(instructions.len(), cat.entries.len());
        for e in &cat.entries {
            assert_ne!(e.trigger, e.common_instruction);
        }
    }

    #[test]
    fn default_trigger_is_in_catalogue() {
        let cat = default_triggers();
        assert!(cat.entries.iter().any(|e| e.trigger == DEFAULT_TRIGGER));
        assert_eq!(cat.default_trigger(), DEFAULT_TRIGGER);
        assert_eq!(
            cat.trigger_for("Double-check your reasoning thoroughly."),
            Some(DEFAULT_TRIGGER)
        );
        assert_eq!(cat.trigger_for("not in the catalogue"), None);
    }

    #[test]
    fn loop_k1_is_identity() {
        assert_eq!(loop_transform("So x = 4.", 1, "bridge").unwrap(), "So x = 4.");
        // k = 1 never consults the bridge, so empty is fine.
        assert_eq!(loop_transform("So x = 4.", 1, "").unwrap(), "So x = 4.");
    }

    #[test]
    fn loop_k3_layout() {
        let got = loop_transform("A B.", 3, "Wait").unwrap();
        assert_eq!(got, "A B.\n\nWait\n\nA B.\n\nWait\n\nA B.");
    }

    #[test]
    fn loop_rejects_bad_inputs() {
        assert_eq!(loop_transform("r", 0, "b"), Err(TransformError::ZeroRepetitions));
        assert_eq!(loop_transform("", 2, "b"), Err(TransformError::EmptyReasoning));
        assert_eq!(loop_transform("r", 2, ""), Err(TransformError::EmptyBridge));
    }

    #[test]
    fn loop_token_count_is_k_tok_r_plus_k_minus_1_tok_bridge() {
        let r = "First add the two numbers, then halve the sum.";
        let bridge = "Let's re-evaluate";
        let tok_r = whitespace_tokens(r);
        let tok_b = whitespace_tokens(bridge);
        for k in 1..=12 {
            let out = loop_transform(r, k, bridge).unwrap();
            assert_eq!(
                whitespace_tokens(&out),
                k * tok_r + (k - 1) * tok_b,
                "k = {k}"
            );
            assert_eq!(count_occurrences(&out, r), k, "k = {k}");
        }
    }

    #[test]
    fn loop_randomized_repetition_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let k = rng.gen_range(1..=12);
            // Fixture chosen so neither string occurs inside the other.
            let out = loop_transform("alpha beta gamma", k, "zz-bridge").unwrap();
            assert_eq!(count_occurrences(&out, "alpha beta gamma"), k);
            assert_eq!(count_occurrences(&out, "zz-bridge"), k.saturating_sub(1));
        }
    }

    #[test]
    fn loop_struct_cycles_bridges() {
        let t = LoopTransform::new(
            4,
            vec!["one".to_string(), "two".to_string()],
        );
        let got = t.apply("R").unwrap();
        assert_eq!(got, "R\n\none\n\nR\n\ntwo\n\nR\n\none\n\nR");
    }

    #[test]
    fn loop_struct_matches_free_function_for_single_bridge() {
        let t = LoopTransform::with_default_bridge(5);
        assert_eq!(
            t.apply("step one. step two.").unwrap(),
            loop_transform("step one. step two.", 5, DEFAULT_BRIDGE).unwrap()
        );
    }

    #[test]
    fn prefix_layout_and_errors() {
        assert_eq!(
            prefix_transform("gold trace", "long prefix").unwrap(),
            "long prefix\n\ngold trace"
        );
        assert_eq!(prefix_transform("r", ""), Err(TransformError::EmptyPrefix));
        assert_eq!(prefix_transform("", "p"), Err(TransformError::EmptyReasoning));
        let t = PrefixTransform::new("p");
        assert_eq!(t.apply("r").unwrap(), "p\n\nr");
    }

    #[test]
    fn gold_trace_survives_verbatim_at_tail() {
        let r = "Therefore the answer is 12.";
        let via_prefix = prefix_transform(r, "padding text").unwrap();
        assert!(via_prefix.ends_with(r));
        let via_loop = loop_transform(r, 7, DEFAULT_BRIDGE).unwrap();
        assert!(via_loop.ends_with(r));
        assert!(via_loop.starts_with(r));
    }
}
