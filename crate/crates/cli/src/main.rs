//! `rebalance`: undersample imbalanced binary CSV data, validate the result,
//! and benchmark the methods against each other.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rebalance::pipeline::{CostModel, Method};
use rebalance::stratification::AllocationStrategy;

#[derive(Debug, Parser)]
#[command(
    name = "rebalance",
    version,
    about = "Statistical undersampling for imbalanced binary data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean a raw CSV: drop unlabeled rows, impute, encode categoricals.
    Ingest(IngestArgs),
    /// Undersample the majority class down to the minority size.
    Undersample(UndersampleArgs),
    /// Compare a subset against the original data feature by feature.
    Validate(ValidateArgs),
    /// Train and score a classifier on every (method, seed) pair.
    Bench(BenchArgs),
    /// Write a seeded synthetic imbalanced dataset.
    GenSynth(GenSynthArgs),
}

#[derive(Debug, Clone, Args)]
struct PreprocessFlags {
    /// Keep duplicate rows instead of dropping them.
    #[arg(long)]
    keep_duplicates: bool,
    /// Drop rows with missing features instead of imputing them.
    #[arg(long)]
    drop_missing: bool,
}

/// Settings shared by `undersample` and `bench`. Flags override the config
/// file, which overrides built-in defaults.
#[derive(Debug, Clone, Args)]
struct RunFlags {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "replay")]
    config: Option<PathBuf>,
    /// Re-run the configuration recorded in a manifest.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    preprocess: PreprocessFlags,

    /// MI path: bins per feature.
    #[arg(long)]
    n_bins: Option<usize>,
    /// MI path: smallest k tried by the elbow search.
    #[arg(long)]
    k_min: Option<usize>,
    /// MI path: largest k tried by the elbow search.
    #[arg(long)]
    k_max: Option<usize>,
    /// MI path: stratum allocation rule.
    #[arg(long, value_enum)]
    allocation: Option<AllocationArg>,
    /// MI path: per-stratum cost model for optimal allocation.
    #[arg(long, value_enum, conflicts_with = "costs")]
    cost_model: Option<CostArg>,
    /// MI path: explicit per-stratum costs for optimal allocation.
    #[arg(long, value_delimiter = ',')]
    costs: Option<Vec<f64>>,

    /// Support points: number of points (defaults to the minority size).
    #[arg(long)]
    m: Option<usize>,
    /// Support points: iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Support points: initial step size.
    #[arg(long)]
    eta: Option<f64>,
    /// Support points: majority size above which a cluster subsample is
    /// optimized instead of the full majority.
    #[arg(long)]
    subset_target: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Random,
    Mi,
    #[value(name = "support_points", alias = "support-points")]
    SupportPoints,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Random => Method::Random,
            MethodArg::Mi => Method::Mi,
            MethodArg::SupportPoints => Method::SupportPoints,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AllocationArg {
    Neyman,
    Optimal,
    Proportional,
}

impl From<AllocationArg> for AllocationStrategy {
    fn from(a: AllocationArg) -> Self {
        match a {
            AllocationArg::Neyman => AllocationStrategy::Neyman,
            AllocationArg::Optimal => AllocationStrategy::Optimal,
            AllocationArg::Proportional => AllocationStrategy::Proportional,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CostArg {
    #[value(name = "stratum_size", alias = "stratum-size")]
    StratumSize,
    Uniform,
}

impl From<CostArg> for CostModel {
    fn from(c: CostArg) -> Self {
        match c {
            CostArg::StratumSize => CostModel::StratumSize,
            CostArg::Uniform => CostModel::Uniform,
        }
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    label_column: String,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[command(flatten)]
    preprocess: PreprocessFlags,
}

#[derive(Debug, Args)]
struct UndersampleArgs {
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Data the subset was drawn from.
    #[arg(long)]
    original: PathBuf,
    /// Subset to check, e.g. a balanced CSV from `undersample`.
    #[arg(long)]
    subset: PathBuf,
    #[arg(long)]
    label_column: String,
    /// Compare only rows of this class (default: the original's majority).
    #[arg(long, conflicts_with = "all_rows")]
    class: Option<String>,
    /// Compare every row regardless of class.
    #[arg(long)]
    all_rows: bool,
    #[arg(long, default_value_t = rebalance::validation::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[command(flatten)]
    preprocess: PreprocessFlags,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated methods to compare.
    #[arg(long, value_enum, value_delimiter = ',')]
    methods: Option<Vec<MethodArg>>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', conflicts_with = "n_seeds")]
    seeds: Option<Vec<u64>>,
    /// Use seeds 0..N.
    #[arg(long)]
    n_seeds: Option<u64>,
    /// Held-out share of each class.
    #[arg(long)]
    test_fraction: Option<f64>,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Debug, Args)]
struct GenSynthArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// Majority share of rows, in (0.5, 1).
    #[arg(long, default_value_t = 0.9)]
    imbalance: f64,
    /// Mixture components per class.
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    /// Typical distance between component centers, in standard deviations.
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "label")]
    label_column: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(args) => commands::ingest(args),
        Command::Undersample(args) => commands::undersample(args),
        Command::Validate(args) => commands::validate(args),
        Command::Bench(args) => commands::bench(args),
        Command::GenSynth(args) => commands::gen_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
