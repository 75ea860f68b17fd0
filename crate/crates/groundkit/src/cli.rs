//! Command-line definitions and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands;
use crate::formats::dialogues::LogFormat;
use crate::gateway::GatewayError;

#[derive(Debug, Parser)]
#[command(name = "groundkit", version, about = "Grounding-act annotation, analysis, forecasting and benchmarking")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for per-turn and per-task work.
    #[arg(long, global = true, default_value_t = 4)]
    pub jobs: usize,
    /// Serve model calls from the cache only.
    #[arg(long, global = true)]
    pub offline: bool,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a chat log into canonical dialogues and apply corpus filters.
    Ingest(IngestArgs),
    /// Label every turn with a grounding act.
    Annotate(AnnotateArgs),
    /// Rates, compounding chains, restarts, lexicons and agreement.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Training data for the forecaster and evaluation of its scores.
    #[command(subcommand)]
    Forecast(ForecastCommand),
    /// Curate, run and score the grounding benchmark.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Validate intervention templates and print the routing table.
    InterveneConfigCheck(InterveneCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum LanguageFilter {
    /// Accept everything.
    #[default]
    Accept,
    /// Require mostly ASCII letters.
    Ascii,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = LogFormat::Canonical)]
    pub format: LogFormat,
    #[arg(long)]
    pub out: PathBuf,
    /// Error sidecar; defaults to `<out>.errors.jsonl`.
    #[arg(long)]
    pub errors: Option<PathBuf>,
    /// Keep only dialogues the language filter accepts.
    #[arg(long)]
    pub english_only: bool,
    #[arg(long, value_enum, default_value_t = LanguageFilter::Accept)]
    pub language_id: LanguageFilter,
    /// Keep one dialogue per user, picked with `--seed`.
    #[arg(long)]
    pub one_per_user: bool,
    /// Drop dialogues the source marks as toxic.
    #[arg(long)]
    pub drop_toxic: bool,
    /// Stop after this many kept dialogues.
    #[arg(long)]
    pub max: Option<std::num::NonZeroUsize>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Configuration holding the `[labeler]` and `[gateway]` sections.
    #[arg(long)]
    pub labeler: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the labeler model.
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Also write the machine-readable report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Per-speaker act and category rates.
    Rates(RatesArgs),
    /// Compounding conditional probabilities of a category.
    Chain(ChainArgs),
    /// Session restarts by the same user.
    Restarts(RestartArgs),
    /// Words distinguishing one gold label's prompts from the rest.
    Lexicon(LexiconArgs),
    /// Agreement between annotation files.
    Agreement(AgreementArgs),
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Leave instruction turns out of the denominators.
    #[arg(long)]
    pub exclude_instruction: bool,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// advancing, ambiguous, addressing or none.
    #[arg(long)]
    pub category: String,
    /// Chain length.
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// Include assistant turns in the chain.
    #[arg(long)]
    pub all_turns: bool,
    /// Keep instruction turns as chain position 0.
    #[arg(long)]
    pub keep_instruction: bool,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum JudgeKind {
    #[default]
    Exact,
    Llm,
}

#[derive(Debug, Args)]
pub struct RestartArgs {
    /// Canonical dialogues with user ids and timestamps.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Largest gap between a dialogue's start and the previous one's.
    #[arg(long, default_value_t = 30)]
    pub window_mins: i64,
    /// How openings are compared.
    #[arg(long, value_enum, default_value_t = JudgeKind::Exact)]
    pub judge: JudgeKind,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum PriorArg {
    #[default]
    Uniform,
    Pooled,
}

#[derive(Debug, Args)]
pub struct LexiconArgs {
    /// Benchmark task file.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Gold forecast label whose prompts form the target corpus.
    #[arg(long)]
    pub label: String,
    /// Canonical dialogues whose first user turns form the comparison
    /// corpus; defaults to all tasks.
    #[arg(long)]
    pub background: Option<PathBuf>,
    /// Total prior mass; defaults to 0.01 times the vocabulary size.
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long, value_enum, default_value_t = PriorArg::Uniform)]
    pub prior: PriorArg,
    /// Ignore words seen fewer times across both corpora.
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
    /// Words reported at each end.
    #[arg(long, default_value_t = 20)]
    pub top: usize,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    /// Annotation files from different annotators over the same turns.
    #[arg(long = "in", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Reference labels to score the majority consensus against.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ModeArg {
    #[default]
    Initial,
    Prefix,
}

#[derive(Debug, Subcommand)]
pub enum ForecastCommand {
    /// Write conditioned training sequences (and optionally prompts to score).
    BuildData(BuildDataArgs),
    /// AUROC of a forecaster's scores against derived labels.
    Eval(ForecastEvalArgs),
}

#[derive(Debug, Args)]
pub struct BuildDataArgs {
    #[arg(long)]
    pub dialogues: PathBuf,
    #[arg(long)]
    pub acts: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss weight on forecast token positions.
    #[arg(long, default_value_t = groundkit_core::forecast::DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Sequences per first label: a count, or `max` for the smallest class.
    #[arg(long)]
    pub balance: Option<String>,
    /// Also write the prompts a trained forecaster should score.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Forecast from the first user turn, or from every user-turn prefix.
    #[arg(long, value_enum, default_value_t = ModeArg::Initial)]
    pub mode: ModeArg,
}

#[derive(Debug, Args)]
pub struct ForecastEvalArgs {
    #[arg(long)]
    pub dialogues: PathBuf,
    #[arg(long)]
    pub acts: PathBuf,
    /// Logits file, or `gateway` to query the configured score endpoint.
    #[arg(long)]
    pub logits: String,
    /// Forecast from the first user turn, or from every user-turn prefix.
    #[arg(long, value_enum, default_value_t = ModeArg::Initial)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Select benchmark tasks from forecaster outputs.
    Curate(CurateArgs),
    /// Answer each task with a model, label the reply and score it.
    Run(RunArgs),
    /// Accuracy with 95% intervals from scored outcomes.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    #[arg(long)]
    pub dialogues: PathBuf,
    #[arg(long)]
    pub acts: PathBuf,
    /// `[split=]path`; one logits file per split, `test` when unnamed.
    #[arg(long, required = true)]
    pub logits: Vec<String>,
    /// Tasks per label and split.
    #[arg(long, default_value_t = 150)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the configured blocklist file.
    #[arg(long)]
    pub blocklist: Option<PathBuf>,
    /// Query the gateway's moderation endpoint.
    #[arg(long)]
    pub moderate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum InterventionArg {
    #[default]
    None,
    Ground,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    /// Assistant model under test.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub out: PathBuf,
    /// `ground` routes each prompt through its forecast label's template.
    #[arg(long, value_enum, default_value_t = InterventionArg::None)]
    pub intervention: InterventionArg,
    /// Logits file, or `gateway`, routing the intervention.
    #[arg(long)]
    pub forecaster: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Wilson intervals instead of Wald.
    #[arg(long)]
    pub wilson: bool,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct InterveneCheckArgs {
    /// Configuration with an `[intervention]` section; falls back to
    /// `--config`.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0:#}")]
    Validation(anyhow::Error),
    #[error("{0:#}")]
    Environment(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Validation(_) => 1,
            CliError::Environment(_) => 2,
        }
    }

    pub fn env(e: impl Into<anyhow::Error>) -> Self {
        CliError::Environment(e.into())
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Validation(e)
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Config(_) => CliError::Validation(e.into()),
            other => CliError::Environment(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.into())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
