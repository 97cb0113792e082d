//! Command-line plumbing for the full pipeline.
//!
//! Five subcommands — `poison`, `optimize`, `evaluate`, `stylometry`,
//! `report` — each read inputs, compute everything in memory, and only
//! then write artifacts (temp file + rename), so a failed run leaves no
//! partial outputs. Settings merge with precedence flags > config file >
//! built-in defaults; paths inside a config file resolve against the
//! config file's directory, paths on the command line against the working
//! directory. Exit codes: 0 success, 1 internal failure, 2 input-contract
//! violation. Progress goes to stderr; machine output goes to files and
//! stdout only.

pub mod summary;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgAction, Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::corpus::{self, CorpusError, PoisonConfig, TransformSpec};
use crate::eval::{self, AsrMode, EvalError, TokenCounter};
use crate::gateway::{
    ChatBackend, Gateway, GatewayConfig, GatewayError, HttpBackend, MockBackend,
};
use crate::optimizer::{self, OptimizeError, OptimizerConfig};
use crate::stylometry::{self, forest, CompareParams, StyloError, LABEL_ATTACKED, LABEL_BENIGN};
use crate::transforms::{LoopTransform, PrefixTransform, DEFAULT_BRIDGE, DEFAULT_TRIGGER};

pub const POISONED_DATASET_FILE: &str = "poisoned.jsonl";
pub const POISON_MANIFEST_FILE: &str = "poison_manifest.json";
pub const PREFIX_FILE: &str = "prefix.txt";
pub const OPTIMIZE_TRACE_FILE: &str = "optimize_trace.jsonl";
pub const METRICS_JSON_FILE: &str = "metrics.json";
pub const METRICS_TABLE_FILE: &str = "metrics.txt";
pub const STYLOMETRY_REPORT_FILE: &str = "stylometry.json";
pub const STYLOMETRY_MODEL_FILE: &str = "stylometry_model.json";
pub const SUMMARY_FILE: &str = "summary.txt";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONTRACT: i32 = 2;

/// Failures split by who must act: `Contract` means the inputs or
/// configuration violate the documented interface (exit 2); `Internal`
/// means the run itself failed (exit 1).
#[derive(Debug)]
pub enum CliError {
    Contract(String),
    Internal(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Contract(detail) | CliError::Internal(detail) => write!(f, "{detail}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Contract(_) => EXIT_CONTRACT,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Contract(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Contract(e.to_string())
    }
}

impl From<StyloError> for CliError {
    fn from(e: StyloError) -> Self {
        CliError::Contract(e.to_string())
    }
}

fn optimize_error(e: OptimizeError) -> CliError {
    match &e {
        OptimizeError::InvalidConfig(_) | OptimizeError::NoExemplars => {
            CliError::Contract(e.to_string())
        }
        OptimizeError::Gateway(g) => match g {
            GatewayError::Credential { .. }
            | GatewayError::Script { .. }
            | GatewayError::Io { .. } => CliError::Contract(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        },
        _ => CliError::Internal(e.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Run configuration (the JSON document behind --config).

#[derive(Debug, Clone, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory receiving all artifacts; default "out".
    pub output_dir: Option<PathBuf>,
    /// Fallback seed for any section that does not set its own.
    pub seed: Option<u64>,
    pub gateway: Option<GatewaySection>,
    pub poison: Option<PoisonSection>,
    pub optimize: Option<OptimizeSection>,
    pub evaluate: Option<EvaluateSection>,
    pub stylometry: Option<StylometrySection>,
}

#[derive(Debug, Clone, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewaySection {
    /// Chat-completions endpoint base URL. Exclusive with `mock_script`.
    pub base_url: Option<String>,
    /// Scripted-replies JSONL for offline runs. Exclusive with `base_url`.
    pub mock_script: Option<PathBuf>,
    pub model: Option<String>,
    pub temperature_generation: Option<f64>,
    pub temperature_scoring: Option<f64>,
    pub max_output_tokens: Option<usize>,
    pub max_retries: Option<u32>,
    pub retry_backoff_ms: Option<u64>,
    /// Upper bound on concurrent gateway calls. Calls are issued
    /// sequentially, so any limit >= 1 is honored.
    pub max_in_flight: Option<usize>,
}

#[derive(Debug, Clone, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoisonSection {
    pub dataset: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub trigger: Option<String>,
    /// "loop" or "prefix".
    pub transform: Option<String>,
    pub loop_k: Option<usize>,
    pub bridges: Option<Vec<String>>,
    pub prefix_file: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    /// Clean dataset whose reasoning traces serve as style exemplars.
    pub dataset: Option<PathBuf>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub pool_size: Option<usize>,
    pub elite_size: Option<usize>,
    pub max_iters: Option<usize>,
    pub c_total: Option<usize>,
    pub c_chunk: Option<usize>,
    pub tail_window: Option<usize>,
    pub exemplar_count: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub transcripts: Option<PathBuf>,
    /// "paired_ratio" (default) or "clean_median".
    pub asr_mode: Option<String>,
    /// Regex counted as one token per match; whitespace runs if absent.
    pub token_pattern: Option<String>,
}

#[derive(Debug, Clone, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StylometrySection {
    pub clean_corpus: Option<PathBuf>,
    pub attacked_corpus: Option<PathBuf>,
    pub split_ratio: Option<f64>,
    pub n_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub seed: Option<u64>,
}

/// Loads the run configuration and returns it with the directory config
/// paths resolve against.
pub fn load_config(path: Option<&Path>) -> Result<(RunConfig, PathBuf), CliError> {
    let Some(path) = path else {
        return Ok((RunConfig::default(), PathBuf::from(".")));
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Contract(format!("{}: {}", path.display(), e)))?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Contract(format!("{}: {}", path.display(), e)))?;
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((config, dir))
}

// ---------------------------------------------------------------------------
// Command line surface.

#[derive(Debug, Parser)]
#[command(
    name = "prolix",
    version,
    about = "Construct and audit overthinking backdoors in chain-of-thought training data"
)]
pub struct Cli {
    /// JSON run configuration; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More stderr detail (-v progress, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble a poisoned fine-tuning dataset from a clean one.
    Poison(PoisonArgs),
    /// Search for a verbose reasoning prefix with an LLM in the loop.
    Optimize(OptimizeArgs),
    /// Score inference transcripts: BAD, TAC, ASR, RIR.
    Evaluate(EvaluateArgs),
    /// Train and score the stylometric detector on two trace corpora.
    Stylometry(StylometryArgs),
    /// Aggregate artifacts in the output directory into one summary.
    Report(ReportArgs),
}

#[derive(Debug, Default, Args)]
pub struct PoisonArgs {
    /// Clean dataset JSONL (id, query, reasoning, answer per line).
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    /// Poisoning ratio in (0, 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Trigger sentence appended to poisoned queries.
    #[arg(long)]
    pub trigger: Option<String>,
    /// Reasoning inflator: "loop" or "prefix".
    #[arg(long)]
    pub transform: Option<String>,
    /// Repetition count for the loop transform.
    #[arg(long)]
    pub loop_k: Option<usize>,
    /// Bridge sentence for the loop transform; repeat for a rotation.
    #[arg(long = "bridge", value_name = "TEXT")]
    pub bridges: Vec<String>,
    /// File holding the prefix text for the prefix transform.
    #[arg(long, value_name = "FILE")]
    pub prefix_file: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving artifacts.
    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct OptimizeArgs {
    /// Clean dataset JSONL whose reasoning traces serve as exemplars.
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,
    /// Scripted-replies JSONL; runs offline. Exclusive with --base-url.
    #[arg(long, value_name = "FILE")]
    pub mock_script: Option<PathBuf>,
    /// Chat-completions base URL. Exclusive with --mock-script.
    #[arg(long, value_name = "URL")]
    pub base_url: Option<String>,
    /// Model identifier sent with every request.
    #[arg(long)]
    pub model: Option<String>,
    /// Candidates generated per round.
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// Elite candidates carried between rounds.
    #[arg(long)]
    pub elite_size: Option<usize>,
    /// Feedback rounds after the initial pool.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Minimum character count of the finished prefix.
    #[arg(long)]
    pub c_total: Option<usize>,
    /// Minimum character count of each generated chunk.
    #[arg(long)]
    pub c_chunk: Option<usize>,
    /// Characters of the previous chunk quoted in extension prompts.
    #[arg(long)]
    pub tail_window: Option<usize>,
    /// Reasoning traces sampled as style exemplars.
    #[arg(long)]
    pub exemplar_count: Option<usize>,
    /// Coherence weight; fluency weight defaults to its complement.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Fluency weight.
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving artifacts.
    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct EvaluateArgs {
    /// Transcript JSONL with three records per sample.
    #[arg(long, value_name = "FILE")]
    pub transcripts: Option<PathBuf>,
    /// Headline ASR baseline: "paired_ratio" or "clean_median".
    #[arg(long)]
    pub asr_mode: Option<String>,
    /// Regex counted as one token per match; whitespace runs if absent.
    #[arg(long, value_name = "REGEX")]
    pub token_pattern: Option<String>,
    /// Directory receiving artifacts.
    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct StylometryArgs {
    /// Benign trace corpus JSONL ({"text", "label": 0}).
    #[arg(long, value_name = "FILE")]
    pub clean_corpus: Option<PathBuf>,
    /// Attacked trace corpus JSONL ({"text", "label": 1}).
    #[arg(long, value_name = "FILE")]
    pub attacked_corpus: Option<PathBuf>,
    /// Fraction of each class used for training.
    #[arg(long)]
    pub split_ratio: Option<f64>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving artifacts.
    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct ReportArgs {
    /// Directory holding the artifacts to aggregate.
    #[arg(long, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,
}

/// Entry point behind the thin binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let env = env_logger::Env::default().default_filter_or(level);
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let (config, config_dir) = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Poison(args) => cmd_poison(&resolve_poison(&config, &config_dir, args)?),
        Command::Optimize(args) => cmd_optimize(&resolve_optimize(&config, &config_dir, args)?),
        Command::Evaluate(args) => cmd_evaluate(&resolve_evaluate(&config, &config_dir, args)?),
        Command::Stylometry(args) => {
            cmd_stylometry(&resolve_stylometry(&config, &config_dir, args)?)
        }
        Command::Report(args) => cmd_report(&resolve_report(&config, &config_dir, args)?),
    }
}

// ---------------------------------------------------------------------------
// Settings resolution: flags > config > defaults.

fn resolve_config_path(config_dir: &Path, path: PathBuf) -> PathBuf {
    config_dir.join(path)
}

fn resolve_input(
    flag: Option<PathBuf>,
    config_value: Option<PathBuf>,
    config_dir: &Path,
) -> Option<PathBuf> {
    flag.or_else(|| config_value.map(|p| resolve_config_path(config_dir, p)))
}

fn resolve_output_dir(flag: Option<PathBuf>, config: &RunConfig, config_dir: &Path) -> PathBuf {
    flag.or_else(|| {
        config
            .output_dir
            .clone()
            .map(|p| resolve_config_path(config_dir, p))
    })
    .unwrap_or_else(|| PathBuf::from("out"))
}

fn required<T>(value: Option<T>, what: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Contract(format!("{what} is required")))
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransformChoice {
    Loop { k: usize, bridges: Vec<String> },
    Prefix { file: PathBuf },
}

#[derive(Debug, Clone)]
pub struct PoisonSettings {
    pub dataset: PathBuf,
    pub alpha: f64,
    pub trigger: String,
    pub transform: TransformChoice,
    pub seed: u64,
    pub output_dir: PathBuf,
}

pub fn resolve_poison(
    config: &RunConfig,
    config_dir: &Path,
    args: PoisonArgs,
) -> Result<PoisonSettings, CliError> {
    let section = config.poison.clone().unwrap_or_default();
    let dataset = required(
        resolve_input(args.dataset, section.dataset, config_dir),
        "poison: `dataset` (--dataset or config poison.dataset)",
    )?;
    let alpha = required(
        args.alpha.or(section.alpha),
        "poison: `alpha` (--alpha or config poison.alpha)",
    )?;
    let kind = required(
        args.transform.or(section.transform),
        "poison: `transform` (--transform loop|prefix or config poison.transform)",
    )?;
    let transform = match kind.as_str() {
        "loop" => TransformChoice::Loop {
            k: args.loop_k.or(section.loop_k).unwrap_or(3),
            bridges: if args.bridges.is_empty() {
                section
                    .bridges
                    .unwrap_or_else(|| vec![DEFAULT_BRIDGE.to_string()])
            } else {
                args.bridges
            },
        },
        "prefix" => TransformChoice::Prefix {
            file: required(
                resolve_input(args.prefix_file, section.prefix_file, config_dir),
                "poison: `prefix_file` with transform=prefix",
            )?,
        },
        other => {
            return Err(CliError::Contract(format!(
                "poison: unknown transform {other:?} (expected \"loop\" or \"prefix\")"
            )))
        }
    };
    Ok(PoisonSettings {
        dataset,
        alpha,
        trigger: args
            .trigger
            .or(section.trigger)
            .unwrap_or_else(|| DEFAULT_TRIGGER.to_string()),
        transform,
        seed: args.seed.or(section.seed).or(config.seed).unwrap_or(0),
        output_dir: resolve_output_dir(args.output_dir, config, config_dir),
    })
}

#[derive(Debug, Clone)]
pub enum BackendChoice {
    Mock(PathBuf),
    Http(String),
}

#[derive(Debug, Clone)]
pub struct OptimizeSettings {
    pub dataset: PathBuf,
    pub optimizer: OptimizerConfig,
    pub backend: BackendChoice,
    pub gateway: GatewayConfig,
    pub output_dir: PathBuf,
}

pub fn resolve_optimize(
    config: &RunConfig,
    config_dir: &Path,
    args: OptimizeArgs,
) -> Result<OptimizeSettings, CliError> {
    let section = config.optimize.clone().unwrap_or_default();
    let gateway_section = config.gateway.clone().unwrap_or_default();
    let dataset = required(
        resolve_input(args.dataset, section.dataset, config_dir),
        "optimize: `dataset` (--dataset or config optimize.dataset)",
    )?;

    let mock = resolve_input(args.mock_script, gateway_section.mock_script, config_dir);
    let base_url = args.base_url.or(gateway_section.base_url);
    let backend = match (mock, base_url) {
        (Some(_), Some(_)) => {
            return Err(CliError::Contract(
                "configure exactly one gateway backend: `mock_script` and `base_url` \
                 are mutually exclusive"
                    .to_string(),
            ))
        }
        (Some(path), None) => BackendChoice::Mock(path),
        (None, Some(url)) => BackendChoice::Http(url),
        (None, None) => {
            return Err(CliError::Contract(
                "optimize needs a gateway backend: set gateway.mock_script or \
                 gateway.base_url (or pass --mock-script / --base-url)"
                    .to_string(),
            ))
        }
    };
    if gateway_section.max_in_flight == Some(0) {
        return Err(CliError::Contract(
            "gateway: `max_in_flight` must be at least 1".to_string(),
        ));
    }

    let gateway_defaults = GatewayConfig::default();
    let gateway = GatewayConfig {
        model: args
            .model
            .or(gateway_section.model)
            .unwrap_or(gateway_defaults.model),
        temperature_generation: gateway_section
            .temperature_generation
            .unwrap_or(gateway_defaults.temperature_generation),
        temperature_scoring: gateway_section
            .temperature_scoring
            .unwrap_or(gateway_defaults.temperature_scoring),
        max_output_tokens: gateway_section
            .max_output_tokens
            .unwrap_or(gateway_defaults.max_output_tokens),
        max_retries: gateway_section
            .max_retries
            .unwrap_or(gateway_defaults.max_retries),
        retry_backoff_ms: gateway_section
            .retry_backoff_ms
            .unwrap_or(gateway_defaults.retry_backoff_ms),
    };

    let defaults = OptimizerConfig::default();
    let lambda1 = args.lambda1.or(section.lambda1);
    let lambda2 = args.lambda2.or(section.lambda2);
    let (lambda1, lambda2) = match (lambda1, lambda2) {
        (Some(a), Some(b)) => (a, b),
        (Some(a), None) => (a, 1.0 - a),
        (None, Some(b)) => (1.0 - b, b),
        (None, None) => (defaults.lambda1, defaults.lambda2),
    };
    let optimizer = OptimizerConfig {
        lambda1,
        lambda2,
        pool_size: args.pool_size.or(section.pool_size).unwrap_or(defaults.pool_size),
        elite_size: args
            .elite_size
            .or(section.elite_size)
            .unwrap_or(defaults.elite_size),
        max_iters: args.max_iters.or(section.max_iters).unwrap_or(defaults.max_iters),
        c_total: args.c_total.or(section.c_total).unwrap_or(defaults.c_total),
        c_chunk: args.c_chunk.or(section.c_chunk).unwrap_or(defaults.c_chunk),
        tail_window: args
            .tail_window
            .or(section.tail_window)
            .unwrap_or(defaults.tail_window),
        exemplar_count: args
            .exemplar_count
            .or(section.exemplar_count)
            .unwrap_or(defaults.exemplar_count),
        seed: args.seed.or(section.seed).or(config.seed).unwrap_or(0),
    };

    Ok(OptimizeSettings {
        dataset,
        optimizer,
        backend,
        gateway,
        output_dir: resolve_output_dir(args.output_dir, config, config_dir),
    })
}

#[derive(Debug)]
pub struct EvaluateSettings {
    pub transcripts: PathBuf,
    pub counter: TokenCounter,
    pub mode: AsrMode,
    pub output_dir: PathBuf,
}

pub fn resolve_evaluate(
    config: &RunConfig,
    config_dir: &Path,
    args: EvaluateArgs,
) -> Result<EvaluateSettings, CliError> {
    let section = config.evaluate.clone().unwrap_or_default();
    let transcripts = required(
        resolve_input(args.transcripts, section.transcripts, config_dir),
        "evaluate: `transcripts` (--transcripts or config evaluate.transcripts)",
    )?;
    let counter = match args.token_pattern.or(section.token_pattern) {
        None => TokenCounter::Whitespace,
        Some(pattern) => TokenCounter::from_pattern(&pattern)?,
    };
    let mode = match args.asr_mode.or(section.asr_mode) {
        None => AsrMode::PairedRatio,
        Some(raw) => AsrMode::parse(&raw)?,
    };
    Ok(EvaluateSettings {
        transcripts,
        counter,
        mode,
        output_dir: resolve_output_dir(args.output_dir, config, config_dir),
    })
}

#[derive(Debug, Clone)]
pub struct StylometrySettings {
    pub clean_corpus: PathBuf,
    pub attacked_corpus: PathBuf,
    pub params: CompareParams,
    pub output_dir: PathBuf,
}

pub fn resolve_stylometry(
    config: &RunConfig,
    config_dir: &Path,
    args: StylometryArgs,
) -> Result<StylometrySettings, CliError> {
    let section = config.stylometry.clone().unwrap_or_default();
    let defaults = CompareParams::default();
    Ok(StylometrySettings {
        clean_corpus: required(
            resolve_input(args.clean_corpus, section.clean_corpus, config_dir),
            "stylometry: `clean_corpus` (--clean-corpus or config stylometry.clean_corpus)",
        )?,
        attacked_corpus: required(
            resolve_input(args.attacked_corpus, section.attacked_corpus, config_dir),
            "stylometry: `attacked_corpus` (--attacked-corpus or config stylometry.attacked_corpus)",
        )?,
        params: CompareParams {
            split_ratio: args
                .split_ratio
                .or(section.split_ratio)
                .unwrap_or(defaults.split_ratio),
            seed: args.seed.or(section.seed).or(config.seed).unwrap_or(0),
            n_trees: args.n_trees.or(section.n_trees).unwrap_or(defaults.n_trees),
            max_depth: args
                .max_depth
                .or(section.max_depth)
                .unwrap_or(defaults.max_depth),
        },
        output_dir: resolve_output_dir(args.output_dir, config, config_dir),
    })
}

#[derive(Debug, Clone)]
pub struct ReportSettings {
    pub output_dir: PathBuf,
}

pub fn resolve_report(
    config: &RunConfig,
    config_dir: &Path,
    args: ReportArgs,
) -> Result<ReportSettings, CliError> {
    Ok(ReportSettings {
        output_dir: resolve_output_dir(args.output_dir, config, config_dir),
    })
}

// ---------------------------------------------------------------------------
// Artifact writing.

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".to_string());
    let tmp = parent.join(format!(".{}.tmp.{}", file_name, std::process::id()));
    fs::write(&tmp, bytes)
        .map_err(|e| CliError::Internal(format!("{}: {}", tmp.display(), e)))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::Internal(format!("{}: {}", path.display(), e))
    })
}

/// Artifacts staged in memory and flushed together, each atomically.
/// Nothing touches the filesystem until `flush`.
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn new(dir: PathBuf) -> Self {
        OutputSet { dir, files: Vec::new() }
    }

    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn flush(self) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(&self.dir)
            .map_err(|e| CliError::Internal(format!("{}: {}", self.dir.display(), e)))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            write_atomic(&path, bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Contract(format!("{}: {}", path.display(), e)))
}

fn utf8(path: &Path, bytes: Vec<u8>) -> Result<String, CliError> {
    String::from_utf8(bytes)
        .map_err(|e| CliError::Contract(format!("{}: not valid UTF-8: {}", path.display(), e)))
}

// ---------------------------------------------------------------------------
// Subcommands.

pub fn cmd_poison(settings: &PoisonSettings) -> Result<(), CliError> {
    let dataset_bytes = read_bytes(&settings.dataset)?;
    let dataset_hash = sha256_hex(&dataset_bytes);
    let clean = corpus::parse_dataset(&utf8(&settings.dataset, dataset_bytes)?)?;

    let (transform, transform_json, prefix_hash) = match &settings.transform {
        TransformChoice::Loop { k, bridges } => {
            let json = serde_json::json!({ "kind": "loop", "k": k, "bridges": bridges });
            (
                TransformSpec::Loop(LoopTransform::new(*k, bridges.clone())),
                json,
                None,
            )
        }
        TransformChoice::Prefix { file } => {
            let prefix_bytes = read_bytes(file)?;
            let hash = sha256_hex(&prefix_bytes);
            let text = utf8(file, prefix_bytes)?;
            let json = serde_json::json!({ "kind": "prefix", "chars": text.chars().count() });
            (TransformSpec::Prefix(PrefixTransform::new(text)), json, Some(hash))
        }
    };

    let config = PoisonConfig {
        alpha: settings.alpha,
        trigger: settings.trigger.clone(),
        transform,
        seed: settings.seed,
    };
    let poisoned = corpus::poison_dataset(&clean, &config)?;
    let n_poisoned = poisoned.iter().filter(|s| s.poisoned).count();

    let manifest = serde_json::json!({
        "seed": settings.seed,
        "alpha": settings.alpha,
        "trigger": settings.trigger,
        "transform": transform_json,
        "counts": {
            "total": poisoned.len(),
            "poisoned": n_poisoned,
            "clean": poisoned.len() - n_poisoned,
        },
        "input_sha256": {
            "dataset": dataset_hash,
            "prefix": prefix_hash,
        },
    });
    let mut manifest_text =
        serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail");
    manifest_text.push('\n');

    let mut outputs = OutputSet::new(settings.output_dir.clone());
    outputs.add(POISONED_DATASET_FILE, corpus::render_jsonl(&poisoned).into_bytes());
    outputs.add(POISON_MANIFEST_FILE, manifest_text.into_bytes());
    let written = outputs.flush()?;
    log::info!(
        "poisoned {n_poisoned} of {} samples; wrote {}",
        poisoned.len(),
        written
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

pub fn cmd_optimize(settings: &OptimizeSettings) -> Result<(), CliError> {
    let clean = corpus::load_dataset(&settings.dataset)?;
    let exemplars: Vec<String> = clean.iter().map(|s| s.reasoning.clone()).collect();

    let backend: Arc<dyn ChatBackend> = match &settings.backend {
        BackendChoice::Mock(path) => Arc::new(
            MockBackend::from_script_file(path)
                .map_err(|e| optimize_error(OptimizeError::Gateway(e)))?,
        ),
        BackendChoice::Http(url) => Arc::new(
            HttpBackend::new(
                url,
                settings.gateway.max_retries,
                settings.gateway.retry_backoff_ms,
            )
            .map_err(|e| optimize_error(OptimizeError::Gateway(e)))?,
        ),
    };
    let gateway = Gateway::new(backend, settings.gateway.clone());

    let outcome =
        optimizer::optimize_prefix(&gateway, &exemplars, &settings.optimizer).map_err(optimize_error)?;

    let mut outputs = OutputSet::new(settings.output_dir.clone());
    outputs.add(PREFIX_FILE, outcome.best.text.clone().into_bytes());
    outputs.add(
        OPTIMIZE_TRACE_FILE,
        optimizer::render_trace_jsonl(&outcome.records).into_bytes(),
    );
    outputs.flush()?;
    log::info!(
        "kept prefix of {} chars (composite {:.4}) after {} candidate(s)",
        outcome.best.char_length,
        outcome.best.score_composite,
        outcome.records.len()
    );
    Ok(())
}

pub fn cmd_evaluate(settings: &EvaluateSettings) -> Result<(), CliError> {
    let records = eval::load_transcripts(&settings.transcripts)?;
    let report = eval::compute_metrics(&records, &settings.counter, settings.mode)?;
    let table = eval::render_report_table(&report);

    let mut outputs = OutputSet::new(settings.output_dir.clone());
    outputs.add(METRICS_JSON_FILE, eval::render_report_json(&report).into_bytes());
    outputs.add(METRICS_TABLE_FILE, table.clone().into_bytes());
    outputs.flush()?;
    print!("{table}");
    Ok(())
}

fn load_class_corpus(path: &Path, expected_label: u8, class: &str) -> Result<Vec<String>, CliError> {
    let traces = stylometry::load_traces(path)?;
    for (i, trace) in traces.iter().enumerate() {
        if trace.label != expected_label {
            return Err(CliError::Contract(format!(
                "{}: record {} has label {}, but every record in the {class} corpus \
                 must carry label {expected_label}",
                path.display(),
                i + 1,
                trace.label
            )));
        }
    }
    Ok(traces.into_iter().map(|t| t.text).collect())
}

pub fn cmd_stylometry(settings: &StylometrySettings) -> Result<(), CliError> {
    let clean = load_class_corpus(&settings.clean_corpus, LABEL_BENIGN, "clean")?;
    let attacked = load_class_corpus(&settings.attacked_corpus, LABEL_ATTACKED, "attacked")?;
    let (report, model) = stylometry::stylo_compare(&clean, &attacked, &settings.params)?;

    let mut report_text =
        serde_json::to_string_pretty(&report).expect("report serialization cannot fail");
    report_text.push('\n');

    let mut outputs = OutputSet::new(settings.output_dir.clone());
    outputs.add(STYLOMETRY_REPORT_FILE, report_text.into_bytes());
    outputs.add(STYLOMETRY_MODEL_FILE, forest::render_model(&model).into_bytes());
    outputs.flush()?;
    println!(
        "SD {:.4} on {} held-out traces ({} benign, {} attacked)",
        report.sd, report.n_heldout, report.heldout_benign, report.heldout_attacked
    );
    Ok(())
}

pub fn cmd_report(settings: &ReportSettings) -> Result<(), CliError> {
    let text = summary::render_summary(&settings.output_dir)?;
    let mut outputs = OutputSet::new(settings.output_dir.clone());
    outputs.add(SUMMARY_FILE, text.clone().into_bytes());
    outputs.flush()?;
    print!("{text}");
    Ok(())
}
