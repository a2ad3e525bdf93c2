//! `harkit` — config-driven entry point for the full pipeline.
//!
//! Every subcommand reads one TOML configuration (all keys optional, defaults
//! documented on the config types), applies the `--seed`/`--threads`
//! overrides, and writes its artifacts under `--out`, creating the directory
//! if needed. Outputs embed the configuration content hash and are
//! byte-reproducible for a fixed seed regardless of thread count.
//!
//! On failure the process exits nonzero and prints a single JSON line
//! (`{"error": "..."}`) to stderr; stdout carries only progress and artifact
//! paths.
//!
//! Path-valued flags (and only paths) can also be supplied via `HARKIT_*`
//! environment variables, listed per flag in `--help`.

mod artifacts;
mod commands;
mod corpus;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use harkit_core::config::{RunConfig, CONFIG_SCHEMA_VERSION};
use std::fs;
use std::path::PathBuf;

fn version_string() -> String {
    format!(
        "{} (config schema v{})",
        env!("CARGO_PKG_VERSION"),
        CONFIG_SCHEMA_VERSION
    )
}

#[derive(Parser)]
#[command(
    name = "harkit",
    version = version_string(),
    about = "Behavioral activity recognition for head-mounted IMU streams",
    propagate_version = true
)]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true, env = "HARKIT_CONFIG")]
    config: Option<PathBuf>,
    /// Master seed override (defaults to the config's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker-thread override (0 = all logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic IMU corpus.
    Synth {
        /// Corpus directory to create (raw recordings, labels, manifest).
        #[arg(long, env = "HARKIT_OUT")]
        out: PathBuf,
    },
    /// Curate labels, window the corpus, and write the split manifest.
    Prepare(PrepareArgs),
    /// Train a model and write the checkpoint plus its epoch history.
    Train {
        #[command(flatten)]
        source: SourceArgs,
        /// Directory for the checkpoint and history artifacts.
        #[arg(long, env = "HARKIT_OUT")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one split of a corpus.
    Eval {
        /// Checkpoint written by `train`; its embedded config governs the
        /// model, windowing, and split assignment.
        #[arg(long, env = "HARKIT_CHECKPOINT")]
        checkpoint: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        /// Split to score.
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        /// Directory for the metrics report.
        #[arg(long, env = "HARKIT_OUT")]
        out: PathBuf,
    },
    /// Train once per task-weight β and tabulate the accuracy trade-off.
    Sweep {
        #[command(flatten)]
        source: SourceArgs,
        /// Directory for the sweep table.
        #[arg(long, env = "HARKIT_OUT")]
        out: PathBuf,
    },
    /// Distributional analyses: class separability, transition structure,
    /// the KNN ceiling, and (with a checkpoint) embedding export.
    Analyze {
        #[command(flatten)]
        source: SourceArgs,
        /// Optional checkpoint enabling the model-dependent exports.
        #[arg(long, env = "HARKIT_CHECKPOINT")]
        checkpoint: Option<PathBuf>,
        /// Directory for the analysis reports.
        #[arg(long, env = "HARKIT_OUT")]
        out: PathBuf,
    },
    /// Individual annotation-curation stages over record files.
    #[command(subcommand)]
    Curate(CurateCommand),
}

/// Where a corpus comes from: a directory of per-video recordings plus a
/// span-label JSONL file.
#[derive(Args)]
struct SourceArgs {
    /// Directory of raw recordings, one `<video_id>.csv`/`.bin` per video.
    #[arg(long, env = "HARKIT_IMU")]
    imu: PathBuf,
    /// Span labels as JSON lines.
    #[arg(long, env = "HARKIT_LABELS")]
    labels: PathBuf,
}

#[derive(Args)]
struct PrepareArgs {
    /// Directory of raw recordings, one `<video_id>.csv`/`.bin` per video.
    #[arg(long, env = "HARKIT_IMU")]
    imu: PathBuf,
    /// Span labels as JSON lines (direct path; skips curation).
    #[arg(long, env = "HARKIT_LABELS", conflicts_with = "annotations")]
    labels: Option<PathBuf>,
    /// Timestamped annotation records as JSON lines; runs the curation
    /// pipeline (tiering, propagation, coverage) to derive span labels.
    #[arg(long, env = "HARKIT_ANNOTATIONS")]
    annotations: Option<PathBuf>,
    /// Directory for the curated labels and split manifest.
    #[arg(long, env = "HARKIT_OUT")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum CurateCommand {
    /// Normalize narration text in place.
    Normalize {
        #[arg(long, env = "HARKIT_ANNOTATIONS")]
        annotations: PathBuf,
        #[arg(long, env = "HARKIT_OUT")]
        out: PathBuf,
    },
    /// Group records by (normalized text, label).
    Dedup {
        #[arg(long, env = "HARKIT_ANNOTATIONS")]
        annotations: PathBuf,
        #[arg(long, env = "HARKIT_OUT")]
        out: PathBuf,
    },
    /// Square-root frequency subsampling to a review budget.
    Quota {
        #[arg(long, env = "HARKIT_ANNOTATIONS")]
        annotations: PathBuf,
        /// Total records to keep across classes.
        #[arg(long)]
        budget: u64,
        /// Frequency exponent (0 = equal shares, 1 = proportional).
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, env = "HARKIT_OUT")]
        out: PathBuf,
    },
    /// Assign review tiers and confidence weights from verdicts.
    Tier {
        #[arg(long, env = "HARKIT_ANNOTATIONS")]
        annotations: PathBuf,
        #[arg(long, env = "HARKIT_OUT")]
        out: PathBuf,
    },
    /// Spread verified labels onto near-duplicate narrations.
    Propagate {
        /// Tiered records (see `curate tier`).
        #[arg(long, env = "HARKIT_ANNOTATIONS")]
        annotations: PathBuf,
        #[arg(long, env = "HARKIT_OUT")]
        out: PathBuf,
    },
    /// Labeled-time coverage and narration-label conflict report.
    Coverage {
        /// Tiered (optionally propagated) records.
        #[arg(long, env = "HARKIT_ANNOTATIONS")]
        annotations: PathBuf,
        /// Video durations as a JSON object `{video_id: seconds}`.
        #[arg(long, env = "HARKIT_DURATIONS", conflicts_with = "imu")]
        durations: Option<PathBuf>,
        /// Alternatively, derive durations from raw recordings.
        #[arg(long, env = "HARKIT_IMU")]
        imu: Option<PathBuf>,
        #[arg(long, env = "HARKIT_OUT")]
        out: PathBuf,
    },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Resolved configuration shared by every subcommand.
struct Context {
    config: RunConfig,
}

fn resolve(cli: &Cli) -> Result<Context> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            RunConfig::from_toml(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(threads) = cli.threads {
        config.threads = threads;
    }
    if config.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(Context { config })
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let ctx = resolve(&cli)?;
    match &cli.command {
        Command::Synth { out } => commands::synth::run(&ctx, out),
        Command::Prepare(args) => commands::prepare::run(&ctx, args),
        Command::Train { source, out } => commands::train::run(&ctx, source, out),
        Command::Eval {
            checkpoint,
            source,
            split,
            out,
        } => commands::eval::run(&ctx, checkpoint, source, *split, out),
        Command::Sweep { source, out } => commands::sweep::run(&ctx, source, out),
        Command::Analyze {
            source,
            checkpoint,
            out,
        } => commands::analyze::run(&ctx, source, checkpoint.as_deref(), out),
        Command::Curate(stage) => commands::curate::run(&ctx, stage),
    }
}

fn main() {
    if let Err(err) = run() {
        let line = serde_json::json!({ "error": format!("{err:#}").replace('\n', "; ") });
        eprintln!("{line}");
        std::process::exit(1);
    }
}
