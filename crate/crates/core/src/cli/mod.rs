//! Command-line front end.
//!
//! Every command resolves its settings in three layers: built-in defaults
//! and presets, then the JSON object given by `--config`, then explicit
//! flags. The resolved settings are written to `<command>.run.json` in the
//! output directory together with a hash of their canonical JSON form.

mod commands;
mod pgm;
mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{LanError, Result};

pub use pgm::{encode_pgm, quantize};
pub use run::{config_hash, RunManifest};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "LANKIT_OUT";
pub const DEFAULT_OUT: &str = "lankit-out";

#[derive(Parser, Debug)]
#[command(name = "lankit", version, about = "Train latent attention masks for black-box classifiers")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON file with settings; explicit flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (default: $LANKIT_OUT, then ./lankit-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate or ingest a dataset.
    GenData(GenDataArgs),
    /// Train a classifier from a preset.
    Train(TrainArgs),
    /// Train an attention network against a frozen classifier.
    TrainLan(TrainLanArgs),
    /// Optimise per-sample masks, or evaluate a trained attention network.
    SampleMask(SampleMaskArgs),
    /// Export a mask file as a binary PGM image.
    Render(RenderArgs),
    /// Run a diagnostic.
    Report {
        #[command(subcommand)]
        kind: ReportKind,
    },
}

#[derive(Subcommand, Debug)]
enum ReportKind {
    /// Classifier accuracy by digit position.
    Heatmap(HeatmapArgs),
    /// Grid detection on the mean importance map of an attention network.
    Grid(GridArgs),
    /// Most important vocabulary words of a document mask.
    Topk(TopkArgs),
    /// Importance per labelled region of an image mask.
    Regions(RegionsArgs),
    /// Per-sample masks for several values of beta.
    BetaSweep(BetaSweepArgs),
}

// Flag structs double as the schema of `--config` files: every field is
// optional, and unknown keys are rejected.

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct GenDataArgs {
    /// One of: digits, translated, tank, corpus.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    /// Number of samples (documents for the corpus domain).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Placed digit size for the translated domain: 12 or 7.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digit_size: Option<usize>,
    /// Region `x0,y0,x1,y1` that placed digits must avoid.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclude: Option<String>,
    /// IDX image file to use instead of rendered digits.
    #[arg(long, requires = "idx_labels")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idx_images: Option<PathBuf>,
    #[arg(long, requires = "idx_images")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idx_labels: Option<PathBuf>,
    /// Tank domain: `correlated` (cloud iff tank) or `independent`.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clouds: Option<String>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud_prob: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keywords_per_class: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
    /// Pre-tokenised corpus, one `label<TAB>tokens` document per line.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus_file: Option<PathBuf>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct TrainArgs {
    /// Dataset directory written by gen-data.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// `desk` (default) or `reference`.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<String>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    #[arg(long = "lr")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f32>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Continue from this checkpoint instead of a fresh initialisation.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resume: Option<PathBuf>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct TrainLanArgs {
    /// Classifier checkpoint to explain.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<String>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f32>,
    #[arg(long = "lr")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f32>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    /// `constant:C`, `bootstrap` or `uniform:LO,HI`.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<String>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_samples: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct SampleMaskArgs {
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Sample indices: `3`, `0,4,9` or `0..10`.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indices: Option<String>,
    /// Read masks off this trained attention network instead of optimising.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lan: Option<PathBuf>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f32>,
    #[arg(long = "lr")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f32>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<String>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_samples: Option<usize>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RenderArgs {
    /// Mask file to export.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    /// `importance` (1 - mask, default) or `mask`.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// Image path (default: `<out>/<mask stem>.pgm`).
    #[arg(long, short = 'o')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct HeatmapArgs {
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Dataset of unplaced 28x28 digits (gen-data --domain digits).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digit_size: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct GridArgs {
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lan: Option<PathBuf>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Use only the first N samples.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct TopkArgs {
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    /// Document dataset holding the vocabulary.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RegionsArgs {
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    /// Image dataset holding the sample's boxes.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct BetaSweepArgs {
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    /// Comma-separated positive values.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<String>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[arg(long = "lr")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f32>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<String>,
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("lankit: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let common = cli.common;
    let job = to_job(cli.command);
    let pool = match common.jobs {
        Some(0) => return Err(LanError::Config("--jobs must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| LanError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| job.execute(&common))
}

fn to_job(command: Command) -> commands::Job {
    use commands::Job;
    match command {
        Command::GenData(a) => Job::GenData(a),
        Command::Train(a) => Job::Train(a),
        Command::TrainLan(a) => Job::TrainLan(a),
        Command::SampleMask(a) => Job::SampleMask(a),
        Command::Render(a) => Job::Render(a),
        Command::Report { kind } => match kind {
            ReportKind::Heatmap(a) => Job::Heatmap(a),
            ReportKind::Grid(a) => Job::Grid(a),
            ReportKind::Topk(a) => Job::Topk(a),
            ReportKind::Regions(a) => Job::Regions(a),
            ReportKind::BetaSweep(a) => Job::BetaSweep(a),
        },
    }
}
