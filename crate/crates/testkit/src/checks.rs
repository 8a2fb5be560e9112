//! Solver-versus-oracle comparisons reused by several suites.

use nalgebra::DVector;
use rand::Rng;
use rsci_core::bsde::{
    compute_bounds, random_rate_bounds, solve_exp_h_deterministic, solve_exp_h_random, solve_exp_p_form,
    solve_exp_p_random, solve_exp_y, solve_exp_y_random, solve_log_h, solve_power, solve_power_logform, TimeGrid,
};
use rsci_core::constraints::{exp_hamiltonian, log_hamiltonian, power_hamiltonian};
use rsci_core::strategy::solve_case;
use rsci_core::{CoefficientSet, ConstraintSet, FactorSpec, MarketModel, Utility};

use crate::oracle::{hamiltonian_oracle, objective, Case};

/// A random Hamiltonian input: level in `[0.1, 10]`, gradient in `[−2, 2]^n`.
/// `kind` is `"power"`, `"power-negative"`, `"log"` or `"exp"`.
pub fn random_case<R: Rng>(rng: &mut R, kind: &str, n: usize) -> Case {
    let level = rng.random_range(0.1..10.0);
    let grad: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    match kind {
        "power" => Case::Power { gamma: rng.random_range(0.1..0.9), p: level, lambda: grad },
        "power-negative" => Case::Power { gamma: rng.random_range(-3.0..-0.2), p: level, lambda: grad },
        "log" => Case::Log { h: level, eta: grad },
        "exp" => Case::Exp { beta: rng.random_range(0.2..3.0), h: level, z: grad },
        other => panic!("unknown case kind {other}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleGap {
    /// `|value − oracle| / (1 + |value|)`.
    pub value_gap: f64,
    /// Oracle objective minus objective at the solver's argmax.
    pub objective_gap: f64,
    pub feasible: bool,
    pub value: f64,
    pub oracle: f64,
}

impl OracleGap {
    pub fn passes(&self) -> bool {
        self.feasible && self.value_gap <= 1e-4 && self.objective_gap <= 1e-6
    }
}

/// Runs the solver and the oracle on one instance.
pub fn oracle_gap(case: &Case, set: &ConstraintSet, coeffs: &CoefficientSet) -> Result<OracleGap, String> {
    let r = match case {
        Case::Power { gamma, p, lambda } => power_hamiltonian(set, *gamma, *p, lambda, coeffs),
        Case::Log { h, eta } => log_hamiltonian(set, *h, eta, coeffs),
        Case::Exp { beta, h, z } => exp_hamiltonian(set, *beta, *h, z, coeffs),
    }
    .map_err(|e| e.to_string())?;
    let o = hamiltonian_oracle(case, set, coeffs);
    let c = r.c.unwrap_or(0.0);
    let feasible = if case.has_consumption() {
        set.contains(&r.pi, c, 1e-9)
    } else {
        set.contains_pi(&r.pi, 1e-9)
    };
    let oracle = case.scale() * o.best;
    Ok(OracleGap {
        value_gap: (r.value - oracle).abs() / (1.0 + r.value.abs()),
        objective_gap: o.best - objective(case, coeffs, &r.pi, c),
        feasible,
        value: r.value,
        oracle,
    })
}

/// Largest violation of the a-priori envelope by the solved field, for
/// `kind` in `"power"`, `"log"`, `"exp-deterministic"`, `"exp-random"`
/// (`param` is γ or β). Non-positive means the sandwich holds.
pub fn sandwich_excess(
    kind: &str,
    param: f64,
    model: &MarketModel,
    set: &ConstraintSet,
    grid: &TimeGrid,
) -> Result<f64, String> {
    let e = |err: rsci_core::Error| err.to_string();
    let (field, report) = match kind {
        "power" => {
            let u = Utility::Power { gamma: param };
            let p = solve_power(model, param, set, grid).map_err(e)?;
            (p, compute_bounds(model, &u, set.consumption_witness(), grid).map_err(e)?)
        }
        "log" => (solve_log_h(model, grid).map_err(e)?, compute_bounds(model, &Utility::Log, None, grid).map_err(e)?),
        "exp-deterministic" => {
            let h = solve_exp_h_deterministic(model, grid).map_err(e)?;
            let p = solve_exp_p_form(model, set, param, &h, grid).map_err(e)?;
            (p, compute_bounds(model, &Utility::Exp { beta: param }, None, grid).map_err(e)?)
        }
        "exp-random" => {
            let hr = solve_exp_h_random(model, grid).map_err(e)?;
            let p = solve_exp_p_random(model, param, &hr, grid).map_err(e)?;
            (p, random_rate_bounds(model, param, &hr, grid).map_err(e)?)
        }
        other => return Err(format!("unknown bound case {other}")),
    };
    let (lo, hi) = report.envelope();
    Ok((lo - field.min_value()).max(field.max_value() - hi))
}

/// Largest node discrepancy between two representations of the same
/// solution: `exp(Y)` vs `P` (power), `exp(−βY)` vs `P` (exp-deterministic),
/// and the worse of `|h·p − 1|` and `|Y − h·P|` (exp-random).
pub fn transform_gap(
    kind: &str,
    param: f64,
    model: &MarketModel,
    set: &ConstraintSet,
    grid: &TimeGrid,
) -> Result<f64, String> {
    let e = |err: rsci_core::Error| err.to_string();
    match kind {
        "power" => {
            let p = solve_power(model, param, set, grid).map_err(e)?;
            let y = solve_power_logform(model, param, set, grid).map_err(e)?;
            Ok(y.map_values("expY", f64::exp).max_abs_diff(&p))
        }
        "exp-deterministic" => {
            let h = solve_exp_h_deterministic(model, grid).map_err(e)?;
            let p = solve_exp_p_form(model, set, param, &h, grid).map_err(e)?;
            let y = solve_exp_y(model, set, param, &h, grid).map_err(e)?;
            Ok(y.map_values("P", |v| (-param * v).exp()).max_abs_diff(&p))
        }
        "exp-random" => {
            let hr = solve_exp_h_random(model, grid).map_err(e)?;
            let mut gap: f64 = 0.0;
            for (hv, pv) in hr.h.values[0].iter().zip(&hr.p.values[0]) {
                gap = gap.max((hv * pv - 1.0).abs());
            }
            let p = solve_exp_p_random(model, param, &hr, grid).map_err(e)?;
            let y = solve_exp_y_random(model, param, &hr, grid).map_err(e)?;
            for i in 0..model.ell() {
                for (k, (yv, pv)) in y.values[i].iter().zip(&p.values[i]).enumerate() {
                    gap = gap.max((yv - hr.h.values[0][k] * pv).abs());
                }
            }
            Ok(gap)
        }
        other => Err(format!("unknown transform case {other}")),
    }
}

/// Attaches a factor with zero sensitivities (but non-zero volatility) and
/// returns `(max |factor-mode − ODE-mode|, max spread across factor nodes)`.
pub fn degeneracy_gaps(
    utility: &Utility,
    model: &MarketModel,
    set: &ConstraintSet,
    grid: &TimeGrid,
) -> Result<(f64, f64), String> {
    let e = |err: rsci_core::Error| err.to_string();
    let mut with_factor = model.clone();
    with_factor.factor = Some(FactorSpec {
        kappa: 1.0,
        theta: 0.0,
        vol: DVector::from_element(model.n, 0.2),
        x0: 0.0,
        x_min: -1.0,
        x_max: 1.0,
        nodes: 21,
    });
    let plain = solve_case(model, utility, set, grid).map_err(e)?;
    let factor = solve_case(&with_factor, utility, set, grid).map_err(e)?;
    let mut diff: f64 = 0.0;
    let mut spread: f64 = 0.0;
    for (a, b) in plain.fields().iter().zip(factor.fields().iter()) {
        spread = spread.max(b.factor_spread());
        for i in 0..a.ell() {
            for k in 0..=grid.steps {
                for j in 0..b.nx() {
                    diff = diff.max((a.value(i, k, 0) - b.value(i, k, j)).abs());
                }
            }
        }
    }
    Ok((diff, spread))
}
