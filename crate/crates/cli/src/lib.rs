//! Command-line driver: reads a model document and run settings, solves,
//! simulates or verifies, and writes the results as CSV and JSON files.
//!
//! Exit status: 0 success, 1 I/O, 2 parse, 3 validation, 4 solver,
//! 5 verification.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod verify;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{read_json, utility_from, ConstraintConfig, RunConfig};
use crate::error::CliError;
use crate::pipeline::{CommandKind, RunSpec};

#[derive(Debug, Parser)]
#[command(name = "rsci", version, about = "Optimal consumption-investment under regime switching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the backward systems and write fields, bounds, value and strategy.
    Solve(RunArgs),
    /// As `solve`, then estimate the value by Monte Carlo.
    Simulate(RunArgs),
    /// As `solve`, then run the invariant suite; exits 5 on any failure.
    Verify(RunArgs),
    /// Repeat `solve` over a list of risk-aversion parameters.
    Sweep(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Run document (JSON); flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model document (JSON).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// power, log or exp.
    #[arg(long)]
    pub utility: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Family name or inline JSON object, e.g. '{"family":"box",...}'.
    #[arg(long)]
    pub constraints: Option<String>,
    /// Number of time steps.
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long)]
    pub factor_nodes: Option<usize>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulation step; must divide the solver step.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub antithetic: bool,
    /// Initial wealth.
    #[arg(long, allow_negative_numbers = true)]
    pub x0: Option<f64>,
    /// Initial regime, numbered from 1.
    #[arg(long)]
    pub regime: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Add the elapsed time to summary.json (breaks byte-identical reruns).
    #[arg(long)]
    pub record_timing: bool,
    /// Comma-separated γ or β values for `sweep`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub sweep_values: Option<Vec<f64>>,
}

pub const DEFAULT_GRID_N: usize = 1000;
pub const DEFAULT_PATHS: usize = 20_000;
pub const DEFAULT_SEED: u64 = 42;

fn relative_to(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

/// Merges flags over the run document and fills defaults.
pub fn resolve(command: CommandKind, args: RunArgs) -> Result<RunSpec, CliError> {
    let (file, base) = match &args.config {
        Some(path) => (read_json::<RunConfig>(path)?.0, path.parent().map(Path::to_path_buf)),
        None => (RunConfig::default(), None),
    };
    let base = base.as_deref();
    let model_path = args
        .model
        .or_else(|| file.model.clone().map(|p| relative_to(base, p)))
        .ok_or_else(|| CliError::Parse("missing --model".into()))?;
    let utility_name = args.utility.or(file.utility).ok_or_else(|| CliError::Parse("missing --utility".into()))?;
    let sweep_values = args.sweep_values.or(file.sweep_values).unwrap_or_default();
    let first = sweep_values.first().copied();
    let mut gamma = args.gamma.or(file.gamma);
    let mut beta = args.beta.or(file.beta);
    if command == CommandKind::Sweep {
        gamma = gamma.or(first);
        beta = beta.or(first);
    }
    let utility = utility_from(&utility_name, gamma, beta)?;
    let constraints = match (args.constraints, file.constraints) {
        (Some(text), _) => ConstraintConfig::parse(&text)?,
        (None, Some(serde_json::Value::String(name))) => ConstraintConfig::parse(&name)?,
        (None, Some(value)) => {
            serde_json::from_value(value).map_err(|e| CliError::Parse(format!("constraints: {e}")))?
        }
        (None, None) => ConstraintConfig::Unconstrained,
    };
    let regime = args.regime.or(file.regime).unwrap_or(1);
    if regime == 0 {
        return Err(CliError::Parse("regimes are numbered from 1".into()));
    }
    Ok(RunSpec {
        command,
        model_path,
        utility,
        constraints,
        grid_n: args.grid_n.or(file.grid_n).unwrap_or(DEFAULT_GRID_N),
        factor_nodes: args.factor_nodes.or(file.factor_nodes),
        paths: args.paths.or(file.paths).unwrap_or(DEFAULT_PATHS),
        seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        dt: args.dt.or(file.dt),
        antithetic: args.antithetic || file.antithetic.unwrap_or(false),
        x0: args.x0.or(file.x0).unwrap_or(1.0),
        regime: regime - 1,
        out: args.out.or_else(|| file.out.map(|p| relative_to(base, p))).unwrap_or_else(|| PathBuf::from("rsci-out")),
        record_timing: args.record_timing,
        sweep_values,
    })
}

/// Runs one command; returns the status message and the exit code.
pub fn run(cli: Cli) -> (String, i32) {
    let (kind, args) = match cli.command {
        Command::Solve(a) => (CommandKind::Solve, a),
        Command::Simulate(a) => (CommandKind::Simulate, a),
        Command::Verify(a) => (CommandKind::Verify, a),
        Command::Sweep(a) => (CommandKind::Sweep, a),
    };
    let result = resolve(kind, args).and_then(|spec| {
        let outcome = pipeline::execute(&spec)?;
        outcome.artifacts.write_all(&spec.out)?;
        match outcome.failure {
            Some(f) => Err(CliError::Verification(format!("{}\nfailed checks: {f}", outcome.message))),
            None => Ok(outcome.message),
        }
    });
    match result {
        Ok(msg) => (msg, 0),
        Err(e) => (format!("error: {e}"), e.exit_code()),
    }
}
