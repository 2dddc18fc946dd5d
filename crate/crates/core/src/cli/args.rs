use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Principal eigenpairs, optimal stationary controls and Monte Carlo checks
/// for risk-sensitive control of regime-switching diffusions.
#[derive(Debug, Parser)]
#[command(name = "ergoswitch", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the semilinear eigenproblem on one box; writes solve.json and psi.csv.
    Solve(SolveArgs),
    /// Solve on a ladder of nested boxes; writes sweep.json.
    Sweep(SweepArgs),
    /// Simulate paths and estimate the risk-sensitive rate; writes simulate.json.
    Simulate(SimulateArgs),
    /// Run the solver, optimality, Monte Carlo and Feynman-Kac checks; writes verify.json.
    Verify(VerifyArgs),
    /// Check the structural hypotheses by sampling; writes validate.json.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Model configuration file (JSON).
    #[arg(long, conflicts_with = "builtin")]
    pub config: Option<PathBuf>,
    /// Built-in model: lq, ou2, bounded2d or nearmono.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Built-in model parameter override, `name=value`; repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Shorthand for `--param q=VALUE`.
    #[arg(long)]
    pub q: Option<f64>,
    /// Scalar control values, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub controls: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Mesh density; defaults to 100 in one dimension and 8 otherwise.
    #[arg(long)]
    pub nodes_per_unit: Option<usize>,
    /// Policy-iteration stall tolerance.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Eigensolver residual tolerance.
    #[arg(long, default_value_t = 1e-11)]
    pub eig_tol: f64,
    /// Seed for all randomness.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads.
    #[arg(long, env = "ERGOSWITCH_WORKERS")]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Half-width of the box `[-R, R]^d`.
    #[arg(long, default_value_t = 8.0)]
    pub radius: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Strictly increasing radii, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10")]
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Euler step.
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long, default_value_t = 20.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 20_000)]
    pub paths: usize,
    /// Start point, comma separated; defaults to the origin.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub start: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub regime: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Box used to solve for the optimal policy.
    #[arg(long, default_value_t = 8.0)]
    pub radius: f64,
    /// `optimal`, or `constant:INDEX` for a fixed control.
    #[arg(long, default_value = "optimal")]
    pub policy: String,
    /// Dump this many trajectories to trajectories.csv.
    #[arg(long, default_value_t = 0)]
    pub record: usize,
    /// Record every this many steps.
    #[arg(long, default_value_t = 10)]
    pub record_every: usize,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value_t = 8.0)]
    pub radius: f64,
    /// Random alternative policies for the optimality and value checks.
    #[arg(long, default_value_t = 5)]
    pub policy_samples: usize,
    /// Paths per Feynman-Kac start point.
    #[arg(long, default_value_t = 20_000)]
    pub fk_paths: usize,
    /// Euler step of the Feynman-Kac paths.
    #[arg(long, default_value_t = 1e-3)]
    pub fk_step: f64,
    /// Inner radius of the Feynman-Kac annulus; defaults to R / 10.
    #[arg(long)]
    pub r_inner: Option<f64>,
    /// Added to the solved eigenvalue in the Feynman-Kac check.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub lambda_offset: f64,
    /// Skip all Monte Carlo checks.
    #[arg(long)]
    pub no_sim: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Sampling box half-width.
    #[arg(long, default_value_t = 8.0)]
    pub box_radius: f64,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
}
