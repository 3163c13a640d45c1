//! `piht`: single solves, the measurement/sparsity grid and the 2-D basin
//! study from the command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 runtime failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use perturbed_iht::basin2d::StepNorm;
use perturbed_iht::parametric::SubgradientRule;
use perturbed_iht::solvers::StepSize;
use perturbed_iht::{EnsembleKind, Method};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "piht", version, about = "Sparse recovery with perturbed iterative hard thresholding")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Master seed; a random one is generated and recorded when absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Flat TOML file with parameter values; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one random instance and print a JSON summary.
    Solve(SolveArgs),
    /// Run the grid over measurement counts and relative sparsities.
    Grid(GridArgs),
    /// Run the two-dimensional basin-of-attraction study.
    Basin2d(BasinArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct SolverArgs {
    /// Step size: `auto` or a positive number.
    #[arg(long)]
    pub tau: Option<StepSize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub iters_per_round: Option<usize>,
    /// Standard deviation of the restart perturbation.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub train_iterations: Option<usize>,
    #[arg(long)]
    pub dropout_rate: Option<f64>,
    /// Backward rule through the thresholding: `indicator` or `literal`.
    #[arg(long)]
    pub subgradient: Option<SubgradientRule>,
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    #[arg(long)]
    pub ensemble: Option<EnsembleKind>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Relative sparsity; s = round(mu * n).
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub method: Option<Method>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[arg(long)]
    pub ensemble: Option<EnsembleKind>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub m_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub mu_values: Option<Vec<f64>>,
    /// Runs per (m, mu) cell.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub failure_threshold: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Args, Debug, Clone)]
pub struct BasinArgs {
    #[arg(long)]
    pub num_settings: Option<usize>,
    /// Start points per axis.
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub lower: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub upper: Option<f64>,
    #[arg(long)]
    pub step_scale: Option<f64>,
    /// `spectral` or `frobenius`.
    #[arg(long)]
    pub step_norm: Option<StepNorm>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub fixed_point_tol: Option<f64>,
    #[arg(long)]
    pub cluster_tol: Option<f64>,
    /// Setting ids to render as basin maps.
    #[arg(long, value_delimiter = ',')]
    pub render: Option<Vec<usize>>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Solve(a) => commands::solve(&cli.common, a),
        Command::Grid(a) => commands::grid(&cli.common, a),
        Command::Basin2d(a) => commands::basin2d(&cli.common, a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("piht: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("run `piht --help` for usage");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
