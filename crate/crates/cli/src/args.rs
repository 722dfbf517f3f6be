//! Command-line grammar.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Serialize, Serializer};

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "pqcascade",
    version,
    about = "Cascaded PQ gallery search over face embeddings"
)]
pub struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// File of `key = value` lines preloading flags of the chosen command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

pub const DEFAULT_SEED: u64 = 1;

impl Cli {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic labelled dataset.
    GenData(GenDataArgs),
    /// Train product-quantization codebooks.
    TrainCodebook(TrainCodebookArgs),
    /// Encode a gallery into a PQ index.
    BuildIndex(BuildIndexArgs),
    /// PQ or exact top-k search.
    Search(SearchArgs),
    /// PQ filtering followed by slow-matcher re-ranking.
    CascadeSearch(CascadeSearchArgs),
    /// Closed- and open-set metrics for a results file.
    Evaluate(EvaluateArgs),
    /// Scaling or candidate-size benchmark.
    Bench(BenchArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::TrainCodebook(_) => "train-codebook",
            Command::BuildIndex(_) => "build-index",
            Command::Search(_) => "search",
            Command::CascadeSearch(_) => "cascade-search",
            Command::Evaluate(_) => "evaluate",
            Command::Bench(_) => "bench",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenDataArgs {
    /// Enrolled subjects.
    #[arg(long)]
    pub subjects: usize,
    /// Images per enrolled subject, including the probe image when `--probes-out` is set.
    #[arg(long, default_value_t = 1)]
    pub images: usize,
    #[arg(long, default_value_t = 320)]
    pub dim: usize,
    /// Within-class noise scale.
    #[arg(long, default_value_t = 0.08)]
    pub noise: f64,
    /// Fraction of images marked poorly aligned.
    #[arg(long, default_value_t = 0.1)]
    pub poorly_aligned: f64,
    /// Single-image subjects appended to the gallery.
    #[arg(long, default_value_t = 0)]
    pub distractors: usize,
    /// Unenrolled single-image subjects appended to the probes.
    #[arg(long, default_value_t = 0)]
    pub strangers: usize,
    /// Gallery vector file.
    #[arg(long)]
    pub out: PathBuf,
    /// Write each enrolled subject's first image here instead of the gallery.
    #[arg(long)]
    pub probes_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainCodebookArgs {
    /// Training vectors.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Sub-spaces.
    #[arg(long, default_value_t = 64)]
    pub m: usize,
    /// Centroids per sub-space.
    #[arg(long, default_value_t = 256)]
    pub z: usize,
    /// Maximum k-means iterations.
    #[arg(long, default_value_t = 25)]
    pub iters: usize,
    /// Train on at most this many leading rows.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildIndexArgs {
    /// Gallery vectors.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub codebook: PathBuf,
    /// Store normalized float vectors for exact search and the reference matcher.
    #[arg(long)]
    pub keep_raw: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Candidate list size: a number or `auto` (1% of the gallery, clamped).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KArg {
    Auto,
    Fixed(usize),
}

impl FromStr for KArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(KArg::Auto);
        }
        match s.parse::<usize>() {
            Ok(0) => Err("k must be at least 1".into()),
            Ok(k) => Ok(KArg::Fixed(k)),
            Err(_) => Err(format!("expected a positive integer or `auto`, got {s:?}")),
        }
    }
}

impl fmt::Display for KArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KArg::Auto => f.write_str("auto"),
            KArg::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl Serialize for KArg {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Query vectors.
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long, default_value = "10")]
    pub k: KArg,
    /// Exhaustive float search over the index's stored vectors.
    #[arg(long)]
    pub exact: bool,
    /// Metric for `--exact`: cosine, l2 or l1.
    #[arg(long, default_value = "cosine")]
    pub metric: String,
    /// Top-1 score at or above which a probe is marked accepted.
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CascadeSearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long, default_value = "auto")]
    pub k: KArg,
    /// df-plus-cots, df-then-cots, df-then-cots-only or df-then-cots-rank.
    #[arg(long, default_value = "df-then-cots")]
    pub strategy: String,
    /// Offline slow-matcher scores; otherwise the reference matcher scores the index's stored vectors.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Noise scale of the reference matcher.
    #[arg(long, default_value_t = 0.0)]
    pub perturbation: f64,
    /// Student-t degrees of freedom of that noise; Gaussian when omitted.
    #[arg(long)]
    pub tail_dof: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// JSON-lines search results.
    #[arg(long)]
    pub results: PathBuf,
    /// Probe vector file; only its manifest is read.
    #[arg(long)]
    pub probes: PathBuf,
    /// Gallery vector file; only its manifest is read.
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1")]
    pub far_targets: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub ranks: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub cmc_max_rank: usize,
    #[arg(long, default_value_t = 20)]
    pub pr_depth: usize,
    #[arg(long, default_value_t = 100)]
    pub sweep_points: usize,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Plain-text summary.
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchKind {
    Scaling,
    KSweep,
}

/// A number or `none`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct MaybeF64(pub Option<f64>);

impl FromStr for MaybeF64 {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(MaybeF64(None));
        }
        s.parse::<f64>()
            .map(|x| MaybeF64(Some(x)))
            .map_err(|_| format!("expected a number or `none`, got {s:?}"))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "scaling")]
    pub kind: BenchKind,
    /// Distractor counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub distractors: Option<Vec<usize>>,
    /// Candidate sizes, comma separated; scaling runs default to auto k.
    #[arg(long, value_delimiter = ',')]
    pub k_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<String>>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub z: Option<usize>,
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Gallery images per enrolled subject.
    #[arg(long)]
    pub mates: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub poorly_aligned: Option<f64>,
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub perturbation: Option<f64>,
    /// Student-t degrees of freedom of the matcher noise, or `none` for Gaussian.
    #[arg(long)]
    pub tail_dof: Option<MaybeF64>,
    /// Noise of the matcher's second embedding, or `none` to score the indexed vectors.
    #[arg(long)]
    pub view_noise: Option<MaybeF64>,
    /// Timed passes; 0 disables timing.
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub memory_limit: Option<u64>,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// CSV report, one row per cell.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}
