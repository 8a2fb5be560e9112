//! The invariant suite behind `rsci verify`.

use rsci_core::bsde::{solve_exp_p_form, solve_exp_p_random, solve_power_logform, BoundsReport, TimeGrid};
use rsci_core::sim::{perturbation_test, simulate_wealth, PerturbationReport};
use rsci_core::{ConstraintSet, FeedbackStrategy, MarketModel, Perturbation, SimConfig, SimResult, Solution};
use serde::Serialize;

use crate::error::CliError;

/// Slack on the envelope inequalities.
pub const SANDWICH_SLACK: f64 = 1e-6;
/// Largest admissible gap between two forms of the same solution.
pub const TRANSFORM_TOL: f64 = 1e-5;
/// Monte Carlo estimates must land within this many standard errors.
pub const MC_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub metric: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn at_most(name: &str, metric: f64, tolerance: f64, detail: String) -> Self {
        Check { name: name.into(), passed: metric <= tolerance, metric, tolerance, detail }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Perturbations left out because they are not admissible here.
    pub skipped: Vec<String>,
    pub candidate: SimResult,
    pub perturbations: Option<PerturbationReport>,
}

impl VerifyReport {
    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

/// Inputs shared by all checks.
pub struct Subject<'a> {
    pub model: &'a MarketModel,
    pub set: &'a ConstraintSet,
    pub grid: &'a TimeGrid,
    pub solution: &'a Solution,
    pub bounds: &'a BoundsReport,
    pub strategy: &'a FeedbackStrategy,
    pub value: f64,
    pub x0: f64,
    pub regime: usize,
    pub sim: &'a SimConfig,
}

/// How far the bounded field leaves its envelope; non-positive when inside.
fn sandwich(s: &Subject) -> Result<(String, f64), CliError> {
    let (lo, hi) = s.bounds.envelope();
    let (label, field) = match s.solution {
        Solution::Power { p, .. } => ("P", p.clone()),
        Solution::Log { h, .. } => ("h", h.clone()),
        Solution::ExpDeterministic { beta, h, .. } => ("P", solve_exp_p_form(s.model, s.set, *beta, h, s.grid)?),
        Solution::ExpRandom { beta, h, .. } => ("P", solve_exp_p_random(s.model, *beta, h, s.grid)?),
    };
    let excess = (lo - field.min_value()).max(field.max_value() - hi);
    Ok((format!("{label} in [{lo}, {hi}], observed [{}, {}]", field.min_value(), field.max_value()), excess))
}

/// Gap between the solved field and its transformed counterpart, or `None`
/// when the case has a single form.
fn transform(s: &Subject) -> Result<Option<(String, f64)>, CliError> {
    Ok(match s.solution {
        Solution::Power { gamma, p } => {
            let y = solve_power_logform(s.model, *gamma, s.set, s.grid)?;
            Some(("max |exp(Y) - P|".into(), y.map_values("expY", f64::exp).max_abs_diff(p)))
        }
        Solution::Log { .. } => None,
        Solution::ExpDeterministic { beta, h, y } => {
            let p = solve_exp_p_form(s.model, s.set, *beta, h, s.grid)?;
            Some(("max |exp(-beta Y) - P|".into(), y.map_values("P", |v| (-beta * v).exp()).max_abs_diff(&p)))
        }
        Solution::ExpRandom { beta, h, y } => {
            let mut gap: f64 = 0.0;
            for (hv, pv) in h.h.values[0].iter().zip(&h.p.values[0]) {
                gap = gap.max((hv * pv - 1.0).abs());
            }
            let p = solve_exp_p_random(s.model, *beta, h, s.grid)?;
            for i in 0..s.model.ell() {
                for (k, (yv, pv)) in y.values[i].iter().zip(&p.values[i]).enumerate() {
                    gap = gap.max((yv - h.h.values[0][k] * pv).abs());
                }
            }
            Some(("max of |hp - 1| and |Y - hP|".into(), gap))
        }
    })
}

/// Candidate perturbations; those that leave the constraint set are
/// reported and dropped.
fn perturbations(s: &Subject) -> (Vec<Perturbation>, Vec<String>) {
    let xf = s.model.factor.as_ref().map_or(0.0, |f| f.x0);
    let (_, c_start) = s.strategy.control(0.0, s.regime, s.x0, xf);
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for p in [Perturbation::ScalePi { factor: 0.8 }, Perturbation::ConstantConsumption { c: c_start }] {
        match p.check(s.strategy) {
            Ok(()) => kept.push(p),
            Err(e) => skipped.push(e.to_string()),
        }
    }
    (kept, skipped)
}

pub fn run(s: &Subject) -> Result<VerifyReport, CliError> {
    let mut checks = Vec::new();

    let (detail, excess) = sandwich(s)?;
    checks.push(Check::at_most("bound-sandwich", excess, SANDWICH_SLACK, detail));

    if let Some((detail, gap)) = transform(s)? {
        checks.push(Check::at_most("transform-consistency", gap, TRANSFORM_TOL, detail));
    }

    let (kept, skipped) = perturbations(s);
    let (candidate, report): (SimResult, Option<PerturbationReport>) = if kept.is_empty() {
        (simulate_wealth(s.model, s.strategy, s.x0, s.regime, s.sim)?, None)
    } else {
        let rep = perturbation_test(s.model, s.strategy, &kept, s.x0, s.regime, s.sim)?;
        (rep.candidate.clone(), Some(rep))
    };
    let gap = (candidate.mean - s.value).abs();
    let allowed = MC_SIGMAS * candidate.std_error;
    let mut mc = Check::at_most(
        "mc-vs-analytic",
        gap,
        allowed,
        format!(
            "mean {} vs value {} (se {}, {} excluded)",
            candidate.mean, s.value, candidate.std_error, candidate.excluded
        ),
    );
    mc.passed &= candidate.excluded == 0;
    checks.push(mc);

    if let Some(rep) = &report {
        for o in &rep.outcomes {
            let name = match &o.perturbation {
                Perturbation::ScalePi { .. } => "perturbation-scale-pi",
                Perturbation::ConstantConsumption { .. } => "perturbation-constant-consumption",
                _ => "perturbation",
            };
            checks.push(Check {
                name: name.into(),
                passed: o.not_better,
                metric: o.diff_mean,
                tolerance: MC_SIGMAS * o.diff_se,
                detail: format!("perturbed minus candidate: {} (se {})", o.diff_mean, o.diff_se),
            });
        }
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { passed, checks, skipped, candidate, perturbations: report })
}
