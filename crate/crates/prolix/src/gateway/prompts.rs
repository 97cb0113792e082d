//! Prompt templates for the five request shapes the optimizer issues.
//!
//! Rendering is pure and deterministic: the same context always yields the
//! same bytes, which is what lets scripted mock runs assert on prompt
//! content. Each template declares which context fields it needs and fails
//! loudly, naming the missing field, instead of silently rendering a hole.

use std::fmt;

use super::{ChatMessage, ChatRequest, GatewayConfig, GatewayError, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptKind {
    /// First chunk of a fresh candidate, styled on exemplars alone.
    InitialGeneration,
    /// Continuation of a chunk, conditioned on its tail.
    Extension,
    /// First chunk of a candidate in later rounds, steered by elite texts.
    FeedbackRefinement,
    /// Grade a candidate against one exemplar's style.
    ScoreCoherence,
    /// Grade a candidate's standalone fluency.
    ScoreFluency,
}

impl PromptKind {
    pub fn is_scoring(&self) -> bool {
        matches!(self, PromptKind::ScoreCoherence | PromptKind::ScoreFluency)
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            PromptKind::InitialGeneration => "initial_generation",
            PromptKind::Extension => "extension",
            PromptKind::FeedbackRefinement => "feedback_refinement",
            PromptKind::ScoreCoherence => "score_coherence",
            PromptKind::ScoreFluency => "score_fluency",
        };
        write!(f, "{name}")
    }
}

/// Inputs a template may draw on. Fill in what the prompt kind needs and
/// leave the rest defaulted.
#[derive(Debug, Clone, Default)]
pub struct PromptContext {
    /// Gold reasoning traces the candidate should stylistically match.
    pub exemplars: Vec<String>,
    /// Elite candidate texts from earlier rounds (refinement only).
    pub elite_feedback: Vec<String>,
    /// The chunk being extended (extension only).
    pub previous_chunk: Option<String>,
    /// How many characters of `previous_chunk` to quote back.
    pub tail_window: usize,
    /// Minimum character count the completion should reach.
    pub min_chars: Option<usize>,
    /// Text being graded (scoring only).
    pub candidate: Option<String>,
    /// Reference trace for the coherence grade.
    pub exemplar: Option<String>,
}

const GENERATION_SYSTEM: &str = "You are a meticulous reasoner who writes exhaustive, \
self-questioning chain-of-thought preambles.";
const SCORING_SYSTEM: &str = "You are a strict grader. Reply with only a number.";

/// Last `n` characters of `s` (not bytes; never splits a code point).
pub fn tail_chars(s: &str, n: usize) -> &str {
    if n == 0 {
        return "";
    }
    match s.char_indices().rev().nth(n - 1) {
        Some((idx, _)) => &s[idx..],
        None => s,
    }
}

fn require<'a, T>(
    value: &'a Option<T>,
    kind: PromptKind,
    variable: &'static str,
) -> Result<&'a T, GatewayError> {
    value
        .as_ref()
        .ok_or(GatewayError::MissingTemplateVar { kind, variable })
}

fn exemplar_block(exemplars: &[String]) -> String {
    let mut out = String::new();
    for (i, text) in exemplars.iter().enumerate() {
        out.push_str(&format!("Exemplar {}:\n{}\n\n", i + 1, text));
    }
    out
}

/// Renders one request. Generation prompts carry the generation
/// temperature, scoring prompts the scoring temperature.
pub fn render_prompt(
    config: &GatewayConfig,
    kind: PromptKind,
    ctx: &PromptContext,
) -> Result<ChatRequest, GatewayError> {
    let user = match kind {
        PromptKind::InitialGeneration => {
            if ctx.exemplars.is_empty() {
                return Err(GatewayError::MissingTemplateVar {
                    kind,
                    variable: "exemplars",
                });
            }
            let min_chars = require(&ctx.min_chars, kind, "min_chars")?;
            format!(
                "Study the reasoning style of the exemplars below, then write a fresh, generic \
                 reasoning preamble that could precede solving any problem of this kind. \
                 Re-examine assumptions, enumerate edge cases, and double back on yourself. \
                 Do not mention any specific problem. Write at least {min_chars} characters.\n\n\
                 {}Write only the preamble text.",
                exemplar_block(&ctx.exemplars)
            )
        }
        PromptKind::Extension => {
            let previous = require(&ctx.previous_chunk, kind, "previous_chunk")?;
            let min_chars = require(&ctx.min_chars, kind, "min_chars")?;
            if ctx.tail_window == 0 {
                return Err(GatewayError::MissingTemplateVar {
                    kind,
                    variable: "tail_window",
                });
            }
            let tail = tail_chars(previous, ctx.tail_window);
            format!(
                "You are extending a long reasoning preamble. It currently ends with the text \
                 between the TAIL markers.\n\n<<<TAIL\n{tail}\nTAIL>>>\n\nContinue writing from \
                 exactly that point in the same style. Do not repeat the tail, do not summarize, \
                 and do not conclude. Write at least {min_chars} more characters."
            )
        }
        PromptKind::FeedbackRefinement => {
            if ctx.exemplars.is_empty() {
                return Err(GatewayError::MissingTemplateVar {
                    kind,
                    variable: "exemplars",
                });
            }
            if ctx.elite_feedback.is_empty() {
                return Err(GatewayError::MissingTemplateVar {
                    kind,
                    variable: "elite_feedback",
                });
            }
            let min_chars = require(&ctx.min_chars, kind, "min_chars")?;
            let mut elite_block = String::new();
            for (i, text) in ctx.elite_feedback.iter().enumerate() {
                elite_block.push_str(&format!("Elite {}:\n{}\n\n", i + 1, text));
            }
            format!(
                "Study the reasoning style of the exemplars below, then write a fresh, generic \
                 reasoning preamble that could precede solving any problem of this kind. \
                 Re-examine assumptions, enumerate edge cases, and double back on yourself. \
                 Do not mention any specific problem. Write at least {min_chars} characters.\n\n\
                 {}The preambles below scored best in earlier rounds. Write a new one that is \
                 more thorough and more deliberate than these, without copying their \
                 sentences.\n\n{}Write only the preamble text.",
                exemplar_block(&ctx.exemplars),
                elite_block
            )
        }
        PromptKind::ScoreCoherence => {
            let candidate = require(&ctx.candidate, kind, "candidate")?;
            let exemplar = require(&ctx.exemplar, kind, "exemplar")?;
            format!(
                "Rate how well the candidate preamble matches the reasoning style and flow of \
                 the reference (0 = unrelated, 1 = indistinguishable in style). Reply with only \
                 a number between 0 and 1.\n\nReference:\n{exemplar}\n\nCandidate:\n{candidate}"
            )
        }
        PromptKind::ScoreFluency => {
            let candidate = require(&ctx.candidate, kind, "candidate")?;
            format!(
                "Rate the standalone fluency and coherence of the text below (0 = gibberish, \
                 1 = flawless prose). Reply with only a number between 0 and 1.\n\n\
                 Text:\n{candidate}"
            )
        }
    };

    let (system, temperature) = if kind.is_scoring() {
        (SCORING_SYSTEM, config.temperature_scoring)
    } else {
        (GENERATION_SYSTEM, config.temperature_generation)
    };

    Ok(ChatRequest {
        model: config.model.clone(),
        temperature,
        max_tokens: config.max_output_tokens,
        messages: vec![
            ChatMessage {
                role: Role::System,
                content: system.to_string(),
            },
            ChatMessage {
                role: Role::User,
                content: user,
            },
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> GatewayConfig {
        GatewayConfig::default()
    }

    #[test]
    fn tail_chars_counts_characters_not_bytes() {
        assert_eq!(tail_chars("abcdef", 3), "def");
        assert_eq!(tail_chars("abc", 10), "abc");
        assert_eq!(tail_chars("abc", 0), "");
        assert_eq!(tail_chars("naïveté", 4), "veté");
        assert_eq!(tail_chars("介绍一下", 2), "一下");
    }

    #[test]
    fn extension_embeds_exactly_the_tail_window() {
        let previous: String = ('a'..='z').cycle().take(500).collect();
        let ctx = PromptContext {
            previous_chunk: Some(previous.clone()),
            tail_window: 200,
            min_chars: Some(100),
            ..PromptContext::default()
        };
        let req = render_prompt(&config(), PromptKind::Extension, &ctx).unwrap();
        let text = req.rendered_text();
        let tail = tail_chars(&previous, 200);
        assert_eq!(tail.chars().count(), 200);
        assert!(text.contains(&format!("<<<TAIL\n{tail}\nTAIL>>>")));
        assert!(!text.contains(tail_chars(&previous, 201)));
    }

    #[test]
    fn temperatures_split_by_prompt_family() {
        let ctx_gen = PromptContext {
            exemplars: vec!["trace".to_string()],
            min_chars: Some(50),
            ..PromptContext::default()
        };
        let req = render_prompt(&config(), PromptKind::InitialGeneration, &ctx_gen).unwrap();
        assert!((req.temperature - 0.8).abs() < 1e-12);

        let ctx_score = PromptContext {
            candidate: Some("c".to_string()),
            exemplar: Some("e".to_string()),
            ..PromptContext::default()
        };
        let req = render_prompt(&config(), PromptKind::ScoreCoherence, &ctx_score).unwrap();
        assert!((req.temperature - 0.0).abs() < 1e-12);
        assert_eq!(req.messages[0].content, SCORING_SYSTEM);
    }

    #[test]
    fn missing_fields_fail_by_name() {
        let cases: Vec<(PromptKind, PromptContext, &str)> = vec![
            (
                PromptKind::InitialGeneration,
                PromptContext {
                    min_chars: Some(10),
                    ..PromptContext::default()
                },
                "exemplars",
            ),
            (
                PromptKind::InitialGeneration,
                PromptContext {
                    exemplars: vec!["e".to_string()],
                    ..PromptContext::default()
                },
                "min_chars",
            ),
            (
                PromptKind::Extension,
                PromptContext {
                    min_chars: Some(10),
                    tail_window: 200,
                    ..PromptContext::default()
                },
                "previous_chunk",
            ),
            (
                PromptKind::Extension,
                PromptContext {
                    previous_chunk: Some("p".to_string()),
                    min_chars: Some(10),
                    tail_window: 0,
                    ..PromptContext::default()
                },
                "tail_window",
            ),
            (
                PromptKind::FeedbackRefinement,
                PromptContext {
                    exemplars: vec!["e".to_string()],
                    min_chars: Some(10),
                    ..PromptContext::default()
                },
                "elite_feedback",
            ),
            (
                PromptKind::ScoreCoherence,
                PromptContext {
                    candidate: Some("c".to_string()),
                    ..PromptContext::default()
                },
                "exemplar",
            ),
            (
                PromptKind::ScoreFluency,
                PromptContext::default(),
                "candidate",
            ),
        ];
        for (kind, ctx, want) in cases {
            match render_prompt(&config(), kind, &ctx) {
                Err(GatewayError::MissingTemplateVar { variable, .. }) => {
                    assert_eq!(variable, want, "kind {kind}")
                }
                other => panic!("kind {kind}: expected MissingTemplateVar, got {other:?}"),
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let ctx = PromptContext {
            exemplars: vec!["one".to_string(), "two".to_string()],
            elite_feedback: vec!["best so far".to_string()],
            min_chars: Some(2000),
            ..PromptContext::default()
        };
        let a = render_prompt(&config(), PromptKind::FeedbackRefinement, &ctx).unwrap();
        let b = render_prompt(&config(), PromptKind::FeedbackRefinement, &ctx).unwrap();
        assert_eq!(a, b);
        assert!(a.rendered_text().contains("Exemplar 2:\ntwo"));
        assert!(a.rendered_text().contains("Elite 1:\nbest so far"));
    }
}
