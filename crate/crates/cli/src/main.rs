//! `tiltlab`: generate artificial languages, pretrain encoders, transfer
//! them to natural-language tasks, probe them, and aggregate results.

mod commands;
mod data;
mod failure;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::data::SourceArgs;

#[derive(Debug, Parser)]
#[command(name = "tiltlab", version, about = "Artificial-language pretraining and frozen-encoder transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// INI configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed; overrides TILTLAB_SEED and the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record the run as deterministic in its manifest.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an artificial-language corpus.
    Gen(GenArgs),
    /// Report frequency, length and structure statistics of a corpus.
    Stats(StatsArgs),
    /// Build a vocabulary and length histogram from natural text.
    Ingest(IngestArgs),
    /// Pretrain an encoder with CLM or MLM.
    Pretrain(PretrainArgs),
    /// Language-model transfer with a frozen encoder.
    TransferLm(TransferArgs),
    /// Dependency parsing over a frozen encoder.
    Parse(TreebankArgs),
    /// Part-of-speech tagging over a frozen encoder.
    Pos(TreebankArgs),
    /// Context-recovery probes over a frozen encoder.
    Probe(ProbeArgs),
    /// Aggregate run manifests into plot-ready tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Named language instead of a config file.
    #[arg(long, conflicts_with = "config")]
    pub language: Option<String>,
    /// Content vocabulary size for --language.
    #[arg(long, default_value_t = 32_000)]
    pub size: usize,
    /// Sentence count for --language.
    #[arg(long, default_value_t = 100_000)]
    pub sentences: usize,
    /// Worker threads; the output does not depend on this.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Fail with exit code 2 unless every sentence passes the check.
    #[arg(long, value_parser = ["nested", "balanced"])]
    pub check: Option<String>,
    /// Compare sentence lengths with the PTB-fitted distribution.
    #[arg(long)]
    pub ptb_lengths: bool,
    /// Content vocabulary size, when the corpus does not use its top ids.
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// JSON report path (standard output otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: Common,
    /// Natural text, one tokenized sentence per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub vocab_cap: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Training corpus; overrides [data] corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Train one run per seed, each in `<out>/seed-<s>`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Concurrent subprocesses for --seeds.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: SourceArgs,
    /// L2 training text; overrides [data] train.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// L2 evaluation text; overrides [data] eval.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TreebankArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: SourceArgs,
    /// CoNLL-U training treebank; overrides [data] train.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// CoNLL-U evaluation treebank; overrides [data] dev.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: SourceArgs,
    /// Defaults to the checkpoint's pretraining objective.
    #[arg(long, value_parser = ["clm", "mlm"])]
    pub mode: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory of run directories.
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long)]
    pub metric: String,
    #[arg(long, value_delimiter = ',', default_value = "language,architecture")]
    pub group_by: Vec<String>,
    /// Welch test between two values of --compare-key, as `a:b`.
    #[arg(long)]
    pub compare: Option<String>,
    #[arg(long, default_value = "language")]
    pub compare_key: String,
    /// Average transfer seeds within each pretraining seed first.
    #[arg(long)]
    pub by_pretrain_seed: bool,
    /// CSV path (standard output otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Stats(a) => commands::stats(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Pretrain(a) => commands::pretrain(a),
        Command::TransferLm(a) => commands::transfer_lm(a),
        Command::Parse(a) => commands::parse(a),
        Command::Pos(a) => commands::pos(a),
        Command::Probe(a) => commands::probe(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tiltlab: {f}");
            ExitCode::from(f.code() as u8)
        }
    }
}
