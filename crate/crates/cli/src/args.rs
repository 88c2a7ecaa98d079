use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use radsum_core::translate::Field;
use radsum_core::{Language, Split};

#[derive(Debug, Parser)]
#[command(name = "radsum", version, about = "Multilingual radiology report summarization pipeline")]
pub struct Cli {
    /// Workspace root holding registry.json, checkpoints/ and eval/.
    #[arg(long, global = true, default_value = ".", display_order = 100)]
    pub workspace: PathBuf,
    /// Seed for every sampling step.
    #[arg(long, global = true, default_value_t = 0, display_order = 100)]
    pub seed: u64,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn", display_order = 100)]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus engineering: parse, balance, split, mix.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Translate report fields of a corpus into another language.
    Translate(TranslateArgs),
    /// Run fine-tuning stages of a pipeline config.
    Train(TrainArgs),
    /// Generate impressions with a trained checkpoint.
    Summarize(SummarizeArgs),
    /// Score predictions.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run a long-lived service.
    #[command(subcommand)]
    Serve(ServeCommand),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Parse raw reports into a corpus file.
    Parse(ParseArgs),
    /// Downsample over-represented impressions.
    Balance(BalanceArgs),
    /// Assign train/validation/test splits.
    Split(SplitArgs),
    /// Build a language-balanced multilingual corpus.
    Mix(MixArgs),
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// Directory of .txt reports, or JSON Lines {id, text}.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Report language: en, pt or de.
    #[arg(long)]
    pub lang: Language,
    /// Dataset name recorded in the corpus and each report's source.
    #[arg(long)]
    pub name: String,
    /// JSON marker table overriding the built-in section headers.
    #[arg(long)]
    pub markers: Option<PathBuf>,
    /// Fail on the first unparseable report instead of skipping it.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct BalanceArgs {
    /// Corpus file (JSON Lines).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Every impression must stay strictly below this share of the corpus.
    #[arg(long, default_value_t = 0.02)]
    pub cap: f64,
}

#[derive(Debug, Args)]
#[group(id = "spec", required = true, multiple = false)]
pub struct SplitSpecArgs {
    /// Train, validation and test ratios, e.g. 0.64,0.16,0.20.
    #[arg(long, value_name = "TRAIN,VAL,TEST", value_parser = triple::<f64>, group = "spec")]
    pub splits: Option<[f64; 3]>,
    /// Exact train, validation and test counts, e.g. 1591,200,200.
    #[arg(long, value_name = "TRAIN,VAL,TEST", value_parser = triple::<usize>, group = "spec")]
    pub counts: Option<[usize; 3]>,
}

fn triple<T: std::str::FromStr>(s: &str) -> Result<[T; 3], String> {
    let parts: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("invalid number `{p}`")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|_| "expected three comma-separated values".to_string())
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Corpus file (JSON Lines).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output path.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub spec: SplitSpecArgs,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    /// Monolingual corpus; repeat once per language.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Reports per language; defaults to the smallest corpus size.
    #[arg(long)]
    pub per_language: Option<usize>,
    #[command(flatten)]
    pub spec: SplitSpecArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TranslateBackend {
    External,
    Model,
    Table,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Corpus file (JSON Lines).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Translation backend.
    #[arg(long, value_enum)]
    pub backend: TranslateBackend,
    /// Source language.
    #[arg(long)]
    pub from: Language,
    /// Target language.
    #[arg(long)]
    pub to: Language,
    /// Report fields to translate.
    #[arg(long, value_delimiter = ',', default_value = "findings,impression")]
    pub fields: Vec<Field>,
    /// Continue from the progress file of an interrupted run.
    #[arg(long)]
    pub resume: bool,
    /// Also write source/target pairs (JSON Lines) for translation fine-tuning.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Lookup table (JSON Lines {source, target}) for the table backend.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Translation service base URL for the external backend.
    #[arg(long)]
    pub url: Option<String>,
    /// Environment variable holding the service API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Request rate limit for the external backend.
    #[arg(long, default_value_t = 2.0)]
    pub rps: f64,
    /// Translation checkpoint (stage id or directory) for the model backend.
    #[arg(long)]
    pub model: Option<String>,
    /// Concurrent translation requests.
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainBackend {
    Null,
    Toy,
    Full,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Pipeline config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Stage to train; every stage when omitted.
    #[arg(long)]
    pub stage: Option<String>,
    /// Trainer backend.
    #[arg(long, value_enum, default_value = "toy")]
    pub backend: TrainBackend,
    /// Train missing or stale ancestors first.
    #[arg(long)]
    pub recursive: bool,
    /// Trainer program for the full backend; falls back to $RADSUM_TRAINER.
    #[arg(long)]
    pub trainer: Option<String>,
    /// Validate the config and exit.
    #[arg(long)]
    pub check: bool,
    /// Write the null backend's recorded invocations here (JSON).
    #[arg(long)]
    pub invocations_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineProvider {
    Openai,
    Echo,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Stage id from the registry, or a checkpoint directory.
    #[arg(long)]
    pub checkpoint: String,
    /// Corpus file (JSON Lines).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Predictions file (JSON Lines {id, generated, reference}).
    #[arg(long)]
    pub out: PathBuf,
    /// Generation cap in tokens (MNTP).
    #[arg(long, default_value_t = 1000)]
    pub max_new_tokens: usize,
    /// Only summarize this split.
    #[arg(long)]
    pub split: Option<Split>,
    /// Also query a chat model and write a side-by-side comparison.
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineProvider>,
    /// Base URL of an OpenAI-compatible chat API.
    #[arg(long, default_value = "https://api.openai.com/v1")]
    pub baseline_url: String,
    /// Chat model name.
    #[arg(long, default_value = "gpt-3.5-turbo")]
    pub baseline_model: String,
    /// Environment variable holding the chat API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    pub baseline_key_env: String,
    /// Stop querying the baseline once this many tokens are spent.
    #[arg(long)]
    pub spend_cap_tokens: Option<u64>,
    /// Comparison output; defaults to <out>.comparison.jsonl.
    #[arg(long)]
    pub comparison_out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// ROUGE-1/2/L/Lsum F1 of a predictions file.
    Rouge(RougeArgs),
}

#[derive(Debug, Args)]
pub struct RougeArgs {
    /// Predictions file (JSON Lines {id, generated, reference}).
    #[arg(long)]
    pub pred: PathBuf,
    /// Report language: en, pt or de.
    #[arg(long)]
    pub lang: Language,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Model label for the report row; defaults to the predictions file stem.
    #[arg(long)]
    pub label: Option<String>,
    /// Corpus label recorded in the report.
    #[arg(long, default_value = "")]
    pub corpus: String,
}

#[derive(Debug, Subcommand)]
pub enum ServeCommand {
    /// Blind human-evaluation HTTP API.
    EvalApi(EvalApiArgs),
}

#[derive(Debug, Args)]
pub struct EvalApiArgs {
    /// Listen address.
    #[arg(long, default_value = "127.0.0.1:8321")]
    pub addr: SocketAddr,
    /// Session store; defaults to <workspace>/eval.
    #[arg(long)]
    pub dir: Option<PathBuf>,
}
