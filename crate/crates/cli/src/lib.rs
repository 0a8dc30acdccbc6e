//! Command-line front end for the `asyrgs` solvers.
//!
//! Every command prints a one-line JSON summary on stdout. Failures print
//! `{"error": {...}}` on stderr and exit with 2 (config), 3 (input),
//! 4 (non-convergence, `bench` and `fcg`) or 1 (other solver failure).

use std::path::PathBuf;

use asyrgs_core::replay::ScheduleKind;
use asyrgs_core::testkit::MatrixRecipe;
use asyrgs_core::ReadModel;
use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{run, Outcome};
pub use error::{CliError, CliResult};
pub use output::Format;

#[derive(Debug, Parser)]
#[command(name = "asyrgs", version, about = "Asynchronous randomized Gauss-Seidel solvers and bound calculators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a symmetric positive definite system.
    Solve(SolveArgs),
    /// Least squares with normalized columns.
    Lsq(SolveArgs),
    /// Replay a run under a delay model.
    Simulate(SimulateArgs),
    /// Convergence bound report.
    Bounds(BoundsArgs),
    /// Row statistics (and optionally the spectrum) of the unit-diagonal form.
    Stats(StatsArgs),
    /// Timed solver sweeps over recipes and thread counts.
    Bench(BenchArgs),
    /// Flexible CG preconditioned by asynchronous sweeps.
    Fcg(FcgArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MatrixArgs {
    /// Matrix Market file.
    #[arg(long, required_unless_present = "recipe", conflicts_with = "recipe")]
    pub matrix: Option<PathBuf>,
    /// Generated matrix, e.g. `banded_spd:n=500,bandwidth=3,seed=1`.
    #[arg(long)]
    pub recipe: Option<MatrixRecipe>,
    /// Right-hand side (one value per line, or a Matrix Market array); all ones if absent.
    #[arg(long)]
    pub rhs: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    /// Trace or report destination.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Defaults to JSON for `.json` paths and CSV otherwise.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverFlags {
    /// JSON config with `solve`/`async`/`fcg`/`schedule`/`model` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub sweeps: Option<u64>,
    /// Total iterations, as an alternative to `--sweeps`.
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Record the error against a dense reference solution.
    #[arg(long)]
    pub exact: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AsyncFlags {
    #[arg(long)]
    pub threads: Option<usize>,
    /// Plain load/store updates instead of atomic adds.
    #[arg(long)]
    pub plain_writes: bool,
    #[arg(long)]
    pub sync_period: Option<u64>,
    /// Collect update-collision statistics.
    #[arg(long)]
    pub instrument: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub matrix: MatrixArgs,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[command(flatten)]
    pub parallel: AsyncFlags,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Write the solution (original variables) here.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    /// Write the run metadata JSON here (asynchronous runs).
    #[arg(long)]
    pub metadata: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<ScheduleKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| {
        format!("unknown schedule '{s}' (none, worst_case, uniform_random, custom)")
    })
}

fn parse_model(s: &str) -> Result<ReadModel, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown model '{s}' (consistent, inconsistent)"))
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub matrix: MatrixArgs,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ReadModel>,
    #[arg(long, value_parser = parse_kind)]
    pub schedule: Option<ScheduleKind>,
    #[arg(long)]
    pub tau: Option<u64>,
    #[arg(long)]
    pub schedule_seed: Option<u64>,
    #[arg(long)]
    pub drop_probability: Option<f64>,
    /// JSON delay schedule, including `custom` ones.
    #[arg(long, conflicts_with = "schedule")]
    pub schedule_file: Option<PathBuf>,
    /// Explicit 0-based coordinates instead of the seeded stream.
    #[arg(long, value_delimiter = ',')]
    pub directions: Option<Vec<usize>>,
    /// Write every iterate (original variables) here.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// TheoryParams JSON.
    #[arg(long, conflicts_with_all = ["matrix", "recipe"])]
    pub params: Option<PathBuf>,
    /// Take n, rho, rho2 and the spectrum from this matrix.
    #[arg(long, conflicts_with = "recipe")]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub recipe: Option<MatrixRecipe>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub lambda_min: Option<f64>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// Sets lambda_min = lambda_max / kappa.
    #[arg(long, conflicts_with = "lambda_min")]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub rho2: Option<f64>,
    #[arg(long)]
    pub tau: Option<u64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Least-squares singular values; `rho2` then describes `AᵀA`.
    #[arg(long, requires = "sigma_max")]
    pub sigma_min: Option<f64>,
    #[arg(long, requires = "sigma_min")]
    pub sigma_max: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub e0: f64,
    /// Chain length of the (b) bounds.
    #[arg(long, default_value_t = 1)]
    pub r: u32,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub matrix: MatrixArgs,
    /// Also report extreme eigenvalues.
    #[arg(long)]
    pub spectrum: bool,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Recipe to benchmark; repeatable.
    #[arg(long = "recipe", required_unless_present = "matrices")]
    pub recipes: Vec<MatrixRecipe>,
    /// Matrix Market file to benchmark; repeatable.
    #[arg(long = "matrix")]
    pub matrices: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub threads: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub sweeps: u64,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long)]
    pub plain_writes: bool,
    #[arg(long)]
    pub instrument: bool,
    /// Required relative residual; any run above it exits with status 4.
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct FcgArgs {
    #[command(flatten)]
    pub matrix: MatrixArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub inner_sweeps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Inner sweep counts for a tradeoff table, e.g. `1,2,5,10`.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<u64>>,
    #[arg(long, default_value_t = 5, requires = "grid")]
    pub repetitions: usize,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, conflicts_with = "grid")]
    pub solution: Option<PathBuf>,
}
