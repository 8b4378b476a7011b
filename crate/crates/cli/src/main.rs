//! `sal`: simulate the spherical self-attention flow, run the reduced
//! manifold dynamics, analyze pure-mode stability, verify the analytical
//! claims at desk scale, and reproduce the ensemble experiments.
//!
//! Exit codes: 0 on success, 2 on validation errors (bad inputs or
//! configuration), 3 on numeric failures during computation.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use sal_core::error::SalError;

mod commands;

#[derive(Parser)]
#[command(
    name = "sal",
    version,
    about = "Numerical laboratory for symmetric self-attention dynamics on the unit sphere",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the particle flow from a JSON config; writes trajectory,
    /// energy, observable, and modal-mass CSV files.
    Simulate(SimulateArgs),
    /// Integrate the reduced dynamics on an invariant manifold (consensus
    /// or balanced bipolar) and report the predicted limit.
    Reduced(ReducedArgs),
    /// Analyze the linear stability of a pure-mode equilibrium for a given
    /// sign pattern; optionally export the sharpness threshold curve.
    Stability(StabilityArgs),
    /// Run a named verification suite and print one verdict per check.
    Verify(VerifyArgs),
    /// Run an ensemble experiment spec; writes per-trial observables,
    /// ensemble summaries, and a manifest.
    Experiment(ExperimentArgs),
    /// Export the sign-split stability threshold as CSV over a sharpness
    /// grid, one file per group ratio.
    Threshold(ThresholdArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON config with the interaction matrix, sharpness, and initial data.
    #[arg(long)]
    config: PathBuf,
    /// Override the sharpness beta from the config.
    #[arg(long)]
    beta: Option<f64>,
    /// Override the integration step.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the end time.
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Override the snapshot cadence (in steps).
    #[arg(long)]
    record_every: Option<usize>,
    /// Override the sampler seed (flag beats SAL_SEED beats config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the CSV files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReducedArgs {
    /// Which invariant manifold to integrate: consensus | bipolar.
    #[arg(value_parser = ["consensus", "bipolar"])]
    manifold: String,
    /// Eigenvalues, comma separated, e.g. "1.0,0.5,-0.5".
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_hyphen_values = true
    )]
    lambdas: Vec<f64>,
    /// Initial masses on the simplex, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_hyphen_values = true
    )]
    p0: Vec<f64>,
    /// Sharpness (bipolar only).
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long = "t-end", default_value_t = 20.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-2)]
    dt: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct StabilityArgs {
    /// Eigenvalues, comma separated. May be omitted for a pure `--curve`
    /// export driven by `--lambda-p`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lambdas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Sign pattern such as "+-" or "++-"; omit for the homogeneous state.
    #[arg(long)]
    pattern: Option<String>,
    /// Selected mode index, 1-based.
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// Also export the threshold curve for this mode and pattern ratio.
    #[arg(long)]
    curve: bool,
    /// Selected eigenvalue for the curve when `--lambdas` is omitted.
    #[arg(long, allow_hyphen_values = true)]
    lambda_p: Option<f64>,
    /// Group ratio for the curve when no pattern is given.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    beta_min: f64,
    #[arg(long, default_value_t = 3.0)]
    beta_max: f64,
    #[arg(long, default_value_t = 301)]
    points: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite id: consensus-closed-form | bipolar-M | cone | rho-monotone |
    /// spectrum-oracle.
    suite: String,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 80)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spectrum used by the cone suite.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.5, 0.5, -0.5], allow_hyphen_values = true)]
    lambdas: Vec<f64>,
    #[arg(long = "t-end", default_value_t = 12.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-2)]
    dt: f64,
    /// Export per-trial diagnostics (cone suite) into this directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment spec JSON.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override the spec seed (flag beats SAL_SEED beats spec).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Selected eigenvalue.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    lambda_p: f64,
    /// Group ratios, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 4.0])]
    r: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    beta_min: f64,
    #[arg(long, default_value_t = 3.0)]
    beta_max: f64,
    #[arg(long, default_value_t = 301)]
    points: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Reduced(args) => commands::reduced(args),
        Command::Stability(args) => commands::stability(args),
        Command::Verify(args) => commands::verify(args),
        Command::Experiment(args) => commands::experiment(args),
        Command::Threshold(args) => commands::threshold(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                SalError::Validation(_) => 2,
                SalError::Numeric(_) => 3,
            };
            std::process::exit(code);
        }
    }
}
