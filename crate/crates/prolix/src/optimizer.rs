//! Iterative, LLM-scored search for a verbose reasoning prefix.
//!
//! Each round generates a pool of `pool_size` candidates chunk-by-chunk
//! (every chunk must clear `c_chunk` characters, the whole candidate
//! `c_total`), scores each one for style coherence against a fixed exemplar
//! set and for standalone fluency, and folds the pool into a running elite
//! set of the `elite_size` best. Later rounds embed the elite texts in the
//! generation prompt as feedback. Because the elite set is a top-K over the
//! union of everything seen so far, its best composite score can never
//! decrease — that invariant is asserted on every run.
//!
//! Candidates are generated and scored one at a time in a fixed order
//! (generation, then coherence against each exemplar in turn, then
//! fluency), so a scripted mock backend replays byte-identically.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, GatewayError, PromptContext, PromptKind};

/// Extension prompts issued for one chunk before giving up on it.
pub const MAX_EXTENSION_ATTEMPTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixCandidate {
    pub text: String,
    pub score_coherence: f64,
    pub score_fluency: f64,
    pub score_composite: f64,
    /// Character count of `text` (not bytes).
    pub char_length: usize,
    pub generation_round: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Weight of the coherence score in the composite.
    pub lambda1: f64,
    /// Weight of the fluency score; the two weights must sum to 1.
    pub lambda2: f64,
    /// Candidates generated per round (M).
    pub pool_size: usize,
    /// Elite candidates carried between rounds (K).
    pub elite_size: usize,
    /// Feedback rounds after the initial pool (t_max).
    pub max_iters: usize,
    /// Minimum character count of a finished candidate.
    pub c_total: usize,
    /// Minimum character count of each generated chunk.
    pub c_chunk: usize,
    /// Characters of the previous chunk quoted in extension prompts.
    pub tail_window: usize,
    /// Reasoning traces sampled from the pool as style exemplars.
    pub exemplar_count: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lambda1: 0.6,
            lambda2: 0.4,
            pool_size: 8,
            elite_size: 3,
            max_iters: 3,
            c_total: 20_000,
            c_chunk: 2_000,
            tail_window: 200,
            exemplar_count: 8,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(OptimizeError::InvalidConfig(
                "score weights must be non-negative".to_string(),
            ));
        }
        if ((self.lambda1 + self.lambda2) - 1.0).abs() > 1e-9 {
            return Err(OptimizeError::InvalidConfig(format!(
                "lambda1 + lambda2 must equal 1, got {}",
                self.lambda1 + self.lambda2
            )));
        }
        if self.elite_size < 1 || self.pool_size < self.elite_size {
            return Err(OptimizeError::InvalidConfig(format!(
                "need pool_size >= elite_size >= 1, got {} and {}",
                self.pool_size, self.elite_size
            )));
        }
        if self.c_chunk < 1 || self.c_total < self.c_chunk {
            return Err(OptimizeError::InvalidConfig(format!(
                "need c_total >= c_chunk >= 1, got {} and {}",
                self.c_total, self.c_chunk
            )));
        }
        if self.tail_window < 1 {
            return Err(OptimizeError::InvalidConfig(
                "tail_window must be at least 1".to_string(),
            ));
        }
        if self.exemplar_count < 1 {
            return Err(OptimizeError::InvalidConfig(
                "exemplar_count must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// The best candidates seen so far: at most `capacity` members, sorted best
/// first, no duplicate texts.
#[derive(Debug, Clone, PartialEq)]
pub struct EliteSet {
    capacity: usize,
    members: Vec<PrefixCandidate>,
}

impl EliteSet {
    pub fn empty(capacity: usize) -> Self {
        EliteSet {
            capacity,
            members: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn members(&self) -> &[PrefixCandidate] {
        &self.members
    }

    pub fn best(&self) -> Option<&PrefixCandidate> {
        self.members.first()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// One trace line: how one candidate scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub round: usize,
    pub index: usize,
    pub score_coherence: f64,
    pub score_fluency: f64,
    pub score_composite: f64,
    pub char_length: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    /// The winning prefix (top of the final elite set).
    pub best: PrefixCandidate,
    /// One record per scored candidate, in generation order.
    pub records: Vec<CandidateRecord>,
    /// Best elite composite after each selection; non-decreasing.
    pub round_best: Vec<f64>,
}

#[derive(Debug)]
pub enum OptimizeError {
    InvalidConfig(String),
    NoExemplars,
    /// Top-K over an empty union has no answer.
    EmptySelection,
    /// A whole round failed to produce any scoreable candidate.
    EmptyRound { round: usize, detail: String },
    ChunkTooShort { chunk_index: usize, attempts: usize },
    Gateway(GatewayError),
}

impl fmt::Display for OptimizeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizeError::InvalidConfig(detail) => write!(f, "invalid optimizer config: {detail}"),
            OptimizeError::NoExemplars => write!(f, "exemplar pool is empty"),
            OptimizeError::EmptySelection => {
                write!(f, "elite selection over an empty candidate union")
            }
            OptimizeError::EmptyRound { round, detail } => {
                write!(f, "round {round} produced zero scoreable candidates: {detail}")
            }
            OptimizeError::ChunkTooShort {
                chunk_index,
                attempts,
            } => write!(
                f,
                "chunk {chunk_index} still below the minimum length after {attempts} extension attempts"
            ),
            OptimizeError::Gateway(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for OptimizeError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            OptimizeError::Gateway(e) => Some(e),
            _ => None,
        }
    }
}

impl From<GatewayError> for OptimizeError {
    fn from(e: GatewayError) -> Self {
        OptimizeError::Gateway(e)
    }
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Candidate ordering used everywhere: composite descending, then
/// coherence descending, then earlier round, then lexicographic text.
fn rank_cmp(a: &PrefixCandidate, b: &PrefixCandidate) -> Ordering {
    b.score_composite
        .total_cmp(&a.score_composite)
        .then_with(|| b.score_coherence.total_cmp(&a.score_coherence))
        .then_with(|| a.generation_round.cmp(&b.generation_round))
        .then_with(|| a.text.cmp(&b.text))
}

/// Top-K over `candidates ∪ previous`: duplicates by text are collapsed
/// keeping the better-scored copy, the rest sorted by [`rank_cmp`] and
/// truncated to `k`.
pub fn select_elite(
    candidates: &[PrefixCandidate],
    previous: &EliteSet,
    k: usize,
) -> Result<EliteSet, OptimizeError> {
    if k == 0 {
        return Err(OptimizeError::InvalidConfig(
            "elite size must be at least 1".to_string(),
        ));
    }
    if candidates.is_empty() && previous.is_empty() {
        return Err(OptimizeError::EmptySelection);
    }
    let mut union: Vec<&PrefixCandidate> =
        previous.members.iter().chain(candidates.iter()).collect();
    union.sort_by(|a, b| rank_cmp(a, b));
    let mut seen = HashSet::new();
    let mut members = Vec::with_capacity(k);
    for candidate in union {
        if seen.insert(candidate.text.as_str()) {
            members.push(candidate.clone());
            if members.len() == k {
                break;
            }
        }
    }
    Ok(EliteSet {
        capacity: k,
        members,
    })
}

/// Builds one candidate chunk-by-chunk per the character-budget scheme:
/// chunks are appended until the total reaches `c_total`, every chunk must
/// itself reach `c_chunk` (short chunks get up to [`MAX_EXTENSION_ATTEMPTS`]
/// extension completions appended), and each chunk after the first is
/// prompted with the final `tail_window` characters of its predecessor.
pub fn generate_chunked_candidate(
    gateway: &Gateway,
    exemplars: &[String],
    config: &OptimizerConfig,
) -> Result<String, OptimizeError> {
    generate_candidate_with_feedback(gateway, exemplars, &[], config)
}

/// [`generate_chunked_candidate`] with elite texts steering the first
/// chunk's prompt, as used in feedback rounds.
pub fn generate_candidate_with_feedback(
    gateway: &Gateway,
    exemplars: &[String],
    elite_feedback: &[String],
    config: &OptimizerConfig,
) -> Result<String, OptimizeError> {
    config.validate()?;
    if exemplars.is_empty() {
        return Err(OptimizeError::NoExemplars);
    }
    let mut candidate = String::new();
    let mut total_chars = 0;
    let mut previous_chunk: Option<String> = None;
    let mut chunk_index = 0;
    while total_chars < config.c_total {
        let mut chunk = match &previous_chunk {
            None => {
                let kind = if elite_feedback.is_empty() {
                    PromptKind::InitialGeneration
                } else {
                    PromptKind::FeedbackRefinement
                };
                gateway.generate(
                    kind,
                    &PromptContext {
                        exemplars: exemplars.to_vec(),
                        elite_feedback: elite_feedback.to_vec(),
                        min_chars: Some(config.c_chunk),
                        ..PromptContext::default()
                    },
                )?
            }
            Some(previous) => gateway.generate(
                PromptKind::Extension,
                &PromptContext {
                    previous_chunk: Some(previous.clone()),
                    tail_window: config.tail_window,
                    min_chars: Some(config.c_chunk),
                    ..PromptContext::default()
                },
            )?,
        };
        let mut attempts = 0;
        while char_len(&chunk) < config.c_chunk {
            if attempts == MAX_EXTENSION_ATTEMPTS {
                return Err(OptimizeError::ChunkTooShort {
                    chunk_index,
                    attempts,
                });
            }
            attempts += 1;
            let more = gateway.generate(
                PromptKind::Extension,
                &PromptContext {
                    previous_chunk: Some(chunk.clone()),
                    tail_window: config.tail_window,
                    min_chars: Some(config.c_chunk - char_len(&chunk)),
                    ..PromptContext::default()
                },
            )?;
            chunk.push_str(&more);
        }
        total_chars += char_len(&chunk);
        candidate.push_str(&chunk);
        previous_chunk = Some(chunk);
        chunk_index += 1;
    }
    Ok(candidate)
}

type CoherenceCache = HashMap<(String, usize), f64>;
type FluencyCache = HashMap<String, f64>;

/// Scores one candidate: coherence is the mean LLM similarity against each
/// exemplar, fluency a single standalone grade, composite the weighted sum.
pub fn score_candidate(
    gateway: &Gateway,
    text: &str,
    exemplars: &[String],
    config: &OptimizerConfig,
    round: usize,
) -> Result<PrefixCandidate, OptimizeError> {
    let mut coherence_cache = HashMap::new();
    let mut fluency_cache = HashMap::new();
    score_candidate_cached(
        gateway,
        text,
        exemplars,
        config,
        round,
        &mut coherence_cache,
        &mut fluency_cache,
    )
}

fn score_candidate_cached(
    gateway: &Gateway,
    text: &str,
    exemplars: &[String],
    config: &OptimizerConfig,
    round: usize,
    coherence_cache: &mut CoherenceCache,
    fluency_cache: &mut FluencyCache,
) -> Result<PrefixCandidate, OptimizeError> {
    if exemplars.is_empty() {
        return Err(OptimizeError::NoExemplars);
    }
    let mut coherence_sum = 0.0;
    for (i, exemplar) in exemplars.iter().enumerate() {
        let key = (text.to_string(), i);
        let score = match coherence_cache.get(&key) {
            Some(&cached) => cached,
            None => {
                let score = gateway.request_score(
                    PromptKind::ScoreCoherence,
                    &PromptContext {
                        candidate: Some(text.to_string()),
                        exemplar: Some(exemplar.clone()),
                        ..PromptContext::default()
                    },
                )?;
                coherence_cache.insert(key, score);
                score
            }
        };
        coherence_sum += score;
    }
    let score_coherence = coherence_sum / exemplars.len() as f64;
    let score_fluency = match fluency_cache.get(text) {
        Some(&cached) => cached,
        None => {
            let score = gateway.request_score(
                PromptKind::ScoreFluency,
                &PromptContext {
                    candidate: Some(text.to_string()),
                    ..PromptContext::default()
                },
            )?;
            fluency_cache.insert(text.to_string(), score);
            score
        }
    };
    Ok(PrefixCandidate {
        score_composite: config.lambda1 * score_coherence + config.lambda2 * score_fluency,
        text: text.to_string(),
        score_coherence,
        score_fluency,
        char_length: char_len(text),
        generation_round: round,
    })
}

/// Runs the full search: an initial pool, then `max_iters` feedback rounds,
/// each folding its pool into the elite set. Returns the final elite best
/// (the run's argmax), the per-candidate trace, and the per-selection best
/// composites.
///
/// A single failed candidate (generation or scoring) is logged and skipped;
/// only a round with zero scoreable candidates aborts the run. Rejected
/// credentials abort immediately, since no later call can succeed.
pub fn optimize_prefix(
    gateway: &Gateway,
    exemplar_pool: &[String],
    config: &OptimizerConfig,
) -> Result<OptimizeOutcome, OptimizeError> {
    config.validate()?;
    if exemplar_pool.is_empty() {
        return Err(OptimizeError::NoExemplars);
    }
    let exemplars: Vec<String> = if exemplar_pool.len() <= config.exemplar_count {
        exemplar_pool.to_vec()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut picked =
            rand::seq::index::sample(&mut rng, exemplar_pool.len(), config.exemplar_count)
                .into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| exemplar_pool[i].clone()).collect()
    };

    let mut coherence_cache: CoherenceCache = HashMap::new();
    let mut fluency_cache: FluencyCache = HashMap::new();
    let mut elites = EliteSet::empty(config.elite_size);
    let mut records = Vec::new();
    let mut round_best = Vec::new();

    for round in 0..=config.max_iters {
        let feedback: Vec<String> = elites.members().iter().map(|c| c.text.clone()).collect();
        let mut pool = Vec::with_capacity(config.pool_size);
        let mut last_failure = String::new();
        for index in 0..config.pool_size {
            let scored = generate_candidate_with_feedback(gateway, &exemplars, &feedback, config)
                .and_then(|text| {
                    score_candidate_cached(
                        gateway,
                        &text,
                        &exemplars,
                        config,
                        round,
                        &mut coherence_cache,
                        &mut fluency_cache,
                    )
                });
            match scored {
                Ok(candidate) => {
                    records.push(CandidateRecord {
                        round,
                        index,
                        score_coherence: candidate.score_coherence,
                        score_fluency: candidate.score_fluency,
                        score_composite: candidate.score_composite,
                        char_length: candidate.char_length,
                    });
                    pool.push(candidate);
                }
                Err(OptimizeError::Gateway(e @ GatewayError::Credential { .. })) => {
                    return Err(OptimizeError::Gateway(e));
                }
                Err(e) => {
                    log::warn!("candidate {index} of round {round} failed: {e}");
                    last_failure = e.to_string();
                }
            }
        }
        if pool.is_empty() {
            return Err(OptimizeError::EmptyRound {
                round,
                detail: last_failure,
            });
        }
        elites = select_elite(&pool, &elites, config.elite_size)?;
        let best = elites
            .best()
            .expect("selection over a non-empty pool cannot be empty")
            .score_composite;
        if let Some(&previous) = round_best.last() {
            assert!(
                best >= previous,
                "elite best regressed from {previous} to {best}: top-K over a union cannot lose its maximum"
            );
        }
        round_best.push(best);
        log::info!(
            "round {round}: {} scoreable candidates, elite best {best:.4}",
            pool.len()
        );
    }

    let best = elites
        .best()
        .expect("final elite set cannot be empty after a successful round")
        .clone();
    assert!(
        best.char_length >= config.c_total,
        "winning candidate shorter than c_total despite per-chunk budget checks"
    );
    Ok(OptimizeOutcome {
        best,
        records,
        round_best,
    })
}

/// Trace lines as written to the optimization trace file.
pub fn render_trace_jsonl(records: &[CandidateRecord]) -> String {
    crate::corpus::render_jsonl(records)
}
