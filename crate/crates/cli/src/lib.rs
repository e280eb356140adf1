//! Command-line front end for multi-study PCA transfer.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub mod commands;
pub mod io;
pub mod study_file;

pub use study_file::StudyFile;

pub const THREADS_ENV: &str = "PCA_TRANSFER_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] pca_transfer::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        use pca_transfer::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Core(e) => match e {
                E::InvalidConfig(_) => 1,
                E::Linalg(_)
                | E::SingularNewton { .. }
                | E::ZeroGap(_)
                | E::DegenerateVariance
                | E::NonPositiveError { .. } => 3,
                _ => 2,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pca-transfer", version, about = "Transfer principal subspaces across studies")]
pub struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = THREADS_ENV, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a study's leading subspace from data or a covariance matrix.
    Summarize(SummarizeArgs),
    /// Weighted Grassmannian barycenter of several study files.
    Barycenter(BarycenterArgs),
    /// Aggregate shared directions from sources and fine-tune on the target.
    Transfer(TransferArgs),
    /// Run a simulation preset and write CSV and JSON results.
    Experiment(ExperimentArgs),
    /// Average relative information preservation of two projectors on test data.
    Ar(ArArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Classical,
    /// Spatial Kendall's tau.
    Elliptical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Kmeans,
    Gradient,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    RawN,
    Effective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    BlindBarycenter,
    TargetTop,
    MultiStart,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Data CSV, one observation per row.
    #[arg(long, required_unless_present = "cov", conflicts_with = "cov")]
    pub input: Option<PathBuf>,
    /// Covariance CSV (p x p) instead of raw data; requires --n.
    #[arg(long, requires = "n")]
    pub cov: Option<PathBuf>,
    /// Sample size behind --cov.
    #[arg(long)]
    pub n: Option<usize>,
    /// Skip the first line of the data CSV.
    #[arg(long)]
    pub header: bool,
    #[arg(long)]
    pub r: usize,
    #[arg(long, value_enum, default_value_t = KindArg::Classical)]
    pub kind: KindArg,
    /// Subtract the sample mean before the classical estimator.
    #[arg(long)]
    pub center: bool,
    /// Number of observation pairs for Kendall's tau; all pairs by default
    /// up to 2000 observations.
    #[arg(long)]
    pub max_pairs: Option<usize>,
    /// Seed of the pair subsample.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Study identifier; defaults to the input file stem.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BarycenterArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub studies: Vec<PathBuf>,
    #[arg(long = "rs")]
    pub r_s: usize,
    #[arg(long, value_enum, default_value_t = WeightingArg::Effective)]
    pub weighting: WeightingArg,
    #[arg(long, default_value = "barycenter")]
    pub id: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub target: PathBuf,
    /// Target covariance CSV (p x p).
    #[arg(long)]
    pub target_cov: PathBuf,
    #[arg(long, num_args = 0..)]
    pub sources: Vec<PathBuf>,
    #[arg(long = "rs")]
    pub r_s: usize,
    #[arg(long = "r0")]
    pub r_0: usize,
    /// Selection threshold; defaults to r_s / 2.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_enum, default_value_t = VariantArg::Kmeans)]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value_t = WeightingArg::Effective)]
    pub weighting: WeightingArg,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = InitArg::BlindBarycenter, conflicts_with = "init_file")]
    pub init: InitArg,
    /// Study file holding an explicit rank-r_s starting subspace.
    #[arg(long)]
    pub init_file: Option<PathBuf>,
    /// Random starts for --init multi-start.
    #[arg(long, default_value_t = 4)]
    pub starts: usize,
    /// Seed of the random starts.
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    #[arg(long, default_value_t = 3)]
    pub warm_start_steps: usize,
    /// Treat every source as informative and skip selection.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value = "combined.study")]
    pub out: PathBuf,
    #[arg(long, default_value = "report.json")]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// s1-figure1 .. s3-figure2, rate-{private,variance-n,variance-K,bias,deviation}
    /// or normality-gaussian.
    #[arg(long)]
    pub preset: String,
    /// Number of sources (scenario presets).
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file whose keys override the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ArArgs {
    /// Study file of the transfer estimate.
    #[arg(long)]
    pub transfer: PathBuf,
    /// Study file of the baseline estimate.
    #[arg(long)]
    pub baseline: PathBuf,
    /// Test CSV, one observation per row.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub header: bool,
}

/// Parses `argv` (program name first), executes it and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let start = Instant::now();
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", cli.threads)))
        .and_then(|pool| pool.install(|| commands::execute(&cli.command)));
    eprintln!("elapsed: {:.3}s", start.elapsed().as_secs_f64());
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
