//! `fel`: functional kernel regression with empirical likelihood intervals.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fel_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "fel",
    version,
    about = "Functional kernel regression with pointwise confidence intervals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print r̂ at the query curves.
    Fit(FitArgs),
    /// Confidence intervals for r(x) at the query curves.
    Interval(IntervalArgs),
    /// Write a simulated dataset.
    Simulate(SimulateArgs),
    /// Run the Monte Carlo coverage study.
    Coverage(CoverageArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Curve file with a `y` column.
    #[arg(long, conflicts_with = "series")]
    pub data: Option<PathBuf>,
    /// Query curves; without it the rows after --train-size are queries.
    #[arg(long)]
    pub query: Option<PathBuf>,
    /// Leading rows of --data used for training when --query is absent.
    #[arg(long, default_value_t = 165)]
    pub train_size: usize,
    /// Number of query rows (default: all remaining; 1 with --series).
    #[arg(long)]
    pub test_size: Option<usize>,
    /// A numeric series turned into sliding-window curves.
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    pub window: usize,
    #[arg(long, default_value_t = 1)]
    pub horizon: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// deriv:k or pca:q.
    #[arg(long, default_value = "deriv:1")]
    pub semimetric: String,
    /// quadratic or uniform.
    #[arg(long, default_value = "quadratic")]
    pub kernel: String,
    /// cv, cv:knn, cv:quantiles:N, fixed:h or knn:k.
    #[arg(long, default_value = "cv")]
    pub bandwidth: String,
    /// Leave-one-out training fits in corrections and residual variance.
    #[arg(long)]
    pub loo_fits: bool,
    /// Partially linear model on the z columns.
    #[arg(long)]
    pub plm: bool,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// TOML report path; a plot-ready CSV is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit 0 even when some queries were skipped.
    #[arg(long)]
    pub allow_skips: bool,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct IntervalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Comma-separated list of el, el_corrected, euclidean, normal,
    /// normal_corrected.
    #[arg(long, default_value = "el,el_corrected,normal,normal_corrected")]
    pub methods: String,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Linear coefficients; adds standard normal z columns.
    #[arg(long)]
    pub beta: Option<String>,
    /// Output curve file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CoverageArgs {
    /// Scenario file; command-line values become its defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 100)]
    pub test: usize,
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 20100)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = "el,normal,el_corrected,normal_corrected")]
    pub methods: String,
    /// cv:knn, cv or cv:quantiles:N.
    #[arg(long, default_value = "cv:knn")]
    pub bandwidth: String,
    #[arg(long)]
    pub loo_fits: bool,
    /// Worker threads (default: FEL_THREADS, else all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Process exit codes by error category.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Report(_) => 1,
        Error::InvalidConfig(_)
        | Error::InvalidArgument(_)
        | Error::InvalidComponents { .. }
        | Error::InsufficientData(_) => 2,
        Error::Parse { .. }
        | Error::MissingColumn(_)
        | Error::InvalidGrid(_)
        | Error::GridTooShort { .. }
        | Error::GridMismatch => 3,
        Error::EmptyNeighborhood { .. } | Error::InsufficientSupport { .. } => 4,
        Error::DegenerateDistances
        | Error::DegenerateScores
        | Error::BracketingFailed { .. }
        | Error::SingularDesign
        | Error::SpecNotFitted => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Interval(a) => commands::interval(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Coverage(a) => commands::coverage(&a),
    };
    match result {
        Ok(commands::Status::Clean) => ExitCode::SUCCESS,
        Ok(commands::Status::Skipped(n)) => {
            eprintln!(
                "fel: {n} query intervals skipped (empty or too small neighborhoods); pass --allow-skips to accept"
            );
            ExitCode::from(4)
        }
        Ok(commands::Status::Failed(n)) => {
            eprintln!("fel: {n} query intervals failed numerically; see the report");
            ExitCode::from(5)
        }
        Err(e) => {
            eprintln!("fel: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
