//! The four commands, from resolved settings to staged artifacts.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use rsci_core::bsde::{compute_bounds, random_rate_bounds, BoundsReport, TimeGrid};
use rsci_core::market::{validate_model, AssumptionSet};
use rsci_core::sim::simulate_wealth;
use rsci_core::strategy::{extract_strategy, solve_case, value_at};
use rsci_core::{ConstraintSet, MarketModel, SimConfig, SimResult, Solution, Utility, ValueReport};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::artifacts::{num, Artifacts};
use crate::config::{ConstraintConfig, ModelConfig};
use crate::error::CliError;
use crate::verify::{self, Subject, VerifyReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Solve,
    Simulate,
    Verify,
    Sweep,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub command: CommandKind,
    pub model_path: PathBuf,
    pub utility: Utility,
    pub constraints: ConstraintConfig,
    pub grid_n: usize,
    pub factor_nodes: Option<usize>,
    pub paths: usize,
    pub seed: u64,
    /// Defaults to the solver step.
    pub dt: Option<f64>,
    pub antithetic: bool,
    pub x0: f64,
    /// Zero-based.
    pub regime: usize,
    pub out: PathBuf,
    pub record_timing: bool,
    pub sweep_values: Vec<f64>,
}

/// Staged output of a run. `failure` is set when verification failed; the
/// artifacts are still written so the report can be inspected.
pub struct Outcome {
    pub artifacts: Artifacts,
    pub failure: Option<String>,
    pub message: String,
}

#[derive(Serialize)]
struct Summary<'a> {
    command: CommandKind,
    model_hash: String,
    utility: Utility,
    constraints: &'a ConstraintConfig,
    grid_n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    factor_nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<&'a ValueReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bounds: Option<&'a BoundsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sim: Option<&'a SimResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verify_passed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

fn assumption_mode(model: &MarketModel, utility: &Utility) -> AssumptionSet {
    match utility {
        Utility::Exp { .. } if model.rate_is_deterministic_common() => AssumptionSet::ExpDeterministicRate,
        Utility::Exp { .. } => AssumptionSet::ExpRandomRate,
        _ => AssumptionSet::PowerLog,
    }
}

struct Prepared {
    model: MarketModel,
    set: ConstraintSet,
    grid: TimeGrid,
    hash: String,
}

fn prepare(spec: &RunSpec) -> Result<Prepared, CliError> {
    let (cfg, bytes) = crate::config::read_json::<ModelConfig>(&spec.model_path)?;
    let mut model = cfg.to_model()?;
    if let Some(nodes) = spec.factor_nodes {
        match model.factor.as_mut() {
            Some(f) => f.nodes = nodes,
            None => return Err(CliError::Validation("factor nodes given but the model has no factor".into())),
        }
    }
    let report = validate_model(&model, assumption_mode(&model, &spec.utility));
    if !report.is_ok() {
        return Err(CliError::Validation(report.to_string()));
    }
    let set = spec.constraints.to_set();
    set.check_dims(model.m)?;
    if spec.grid_n < 2 {
        return Err(CliError::Validation(format!("grid N must be at least 2, got {}", spec.grid_n)));
    }
    if spec.regime >= model.ell() {
        return Err(CliError::Validation(format!(
            "initial regime {} out of range 1..={}",
            spec.regime + 1,
            model.ell()
        )));
    }
    if !matches!(spec.utility, Utility::Exp { .. }) && (spec.x0.is_nan() || spec.x0 <= 0.0) {
        return Err(CliError::Validation(format!("initial wealth must be positive, got {}", spec.x0)));
    }
    let grid = TimeGrid::new(model.horizon, spec.grid_n)?;
    Ok(Prepared { model, set, grid, hash: hex::encode(Sha256::digest(&bytes)) })
}

fn bounds_for(model: &MarketModel, set: &ConstraintSet, sol: &Solution, grid: &TimeGrid) -> Result<BoundsReport, CliError> {
    Ok(match sol {
        Solution::ExpRandom { beta, h, .. } => random_rate_bounds(model, *beta, h, grid)?,
        _ => compute_bounds(model, &sol.utility(), set.consumption_witness(), grid)?,
    })
}

fn value_csv(v: &ValueReport) -> String {
    format!("wealth,regime,value\n{},{},{}\n", num(v.wealth), v.regime, num(v.value))
}

pub fn execute(spec: &RunSpec) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let prep = prepare(spec)?;
    if spec.command == CommandKind::Sweep {
        return sweep(spec, &prep, started);
    }
    let Prepared { model, set, grid, hash } = &prep;
    let sol = solve_case(model, &spec.utility, set, grid)?;
    let bounds = bounds_for(model, set, &sol, grid)?;
    let value = value_at(model, &sol, spec.x0, spec.regime)?;
    let strategy = extract_strategy(model, &sol, set)?;

    let mut art = Artifacts::default();
    for f in sol.fields() {
        art.add(format!("field_{}.csv", f.label), f.to_csv());
    }
    art.add_json("bounds.json", &bounds)?;
    art.add_json("value.json", &value)?;
    art.add("value.csv", value_csv(&value));
    art.add("strategy.csv", strategy.to_csv());

    let sim_cfg = SimConfig {
        n_paths: spec.paths,
        seed: spec.seed,
        dt: spec.dt.unwrap_or_else(|| grid.dt()),
        antithetic: spec.antithetic,
    };
    let mut message = format!("V(x0 = {}, regime {}) = {}", spec.x0, spec.regime + 1, value.value);
    let mut sim = None;
    let mut report: Option<VerifyReport> = None;
    match spec.command {
        CommandKind::Simulate => {
            let r = simulate_wealth(model, &strategy, spec.x0, spec.regime, &sim_cfg)?;
            message.push_str(&format!("\nMonte Carlo mean {} (se {})", r.mean, r.std_error));
            art.add_json("sim.json", &r)?;
            sim = Some(r);
        }
        CommandKind::Verify => {
            let subject = Subject {
                model,
                set,
                grid,
                solution: &sol,
                bounds: &bounds,
                strategy: &strategy,
                value: value.value,
                x0: spec.x0,
                regime: spec.regime,
                sim: &sim_cfg,
            };
            let r = verify::run(&subject)?;
            for c in &r.checks {
                message.push_str(&format!(
                    "\n{} {}: {} (tolerance {})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.metric,
                    c.tolerance
                ));
            }
            for s in &r.skipped {
                message.push_str(&format!("\nskipped: {s}"));
            }
            art.add_json("verify.json", &r)?;
            sim = Some(r.candidate.clone());
            report = Some(r);
        }
        _ => {}
    }

    let summary = Summary {
        command: spec.command,
        model_hash: hash.clone(),
        utility: spec.utility,
        constraints: &spec.constraints,
        grid_n: spec.grid_n,
        factor_nodes: model.factor.as_ref().map(|f| f.nodes),
        value: Some(&value),
        bounds: Some(&bounds),
        sim: sim.as_ref(),
        verify_passed: report.as_ref().map(|r| r.passed),
        sweep_points: None,
        wall_time_s: spec.record_timing.then(|| started.elapsed().as_secs_f64()),
    };
    art.add_json("summary.json", &summary)?;
    let failure = report.filter(|r| !r.passed).map(|r| r.failures().join(", "));
    Ok(Outcome { artifacts: art, failure, message })
}

fn sweep(spec: &RunSpec, prep: &Prepared, started: Instant) -> Result<Outcome, CliError> {
    let Prepared { model, set, grid, hash } = prep;
    let (name, make): (&str, fn(f64) -> Utility) = match spec.utility {
        Utility::Power { .. } => ("gamma", |g| Utility::Power { gamma: g }),
        Utility::Exp { .. } => ("beta", |b| Utility::Exp { beta: b }),
        Utility::Log => return Err(CliError::Parse("sweep needs power or exp utility".into())),
    };
    if spec.sweep_values.is_empty() {
        return Err(CliError::Parse("sweep needs --sweep-values".into()));
    }
    // ordered collect keeps the output independent of the thread count
    let rows: Vec<Result<ValueReport, CliError>> = spec
        .sweep_values
        .par_iter()
        .map(|&v| {
            let u = make(v);
            u.check().map_err(|e| CliError::Validation(e.to_string()))?;
            let sol = solve_case(model, &u, set, grid)?;
            Ok(value_at(model, &sol, spec.x0, spec.regime)?)
        })
        .collect();
    let mut csv = format!("{name},value\n");
    for (v, row) in spec.sweep_values.iter().zip(rows) {
        csv.push_str(&format!("{},{}\n", num(*v), num(row?.value)));
    }
    let mut art = Artifacts::default();
    art.add("sweep.csv", csv);
    let summary = Summary {
        command: spec.command,
        model_hash: hash.clone(),
        utility: spec.utility,
        constraints: &spec.constraints,
        grid_n: spec.grid_n,
        factor_nodes: model.factor.as_ref().map(|f| f.nodes),
        value: None,
        bounds: None,
        sim: None,
        verify_passed: None,
        sweep_points: Some(spec.sweep_values.len()),
        wall_time_s: spec.record_timing.then(|| started.elapsed().as_secs_f64()),
    };
    art.add_json("summary.json", &summary)?;
    Ok(Outcome { artifacts: art, failure: None, message: format!("{} sweep points", spec.sweep_values.len()) })
}
