//! A-priori envelope constants for each utility case.

use serde::Serialize;

use super::engine::{integrate, Problem, Stage};
use super::exp::{market_price, solve_exp_h_random, DeterministicRate, RandomRateH};
use super::grid::TimeGrid;
use crate::error::{Error, Result};
use crate::market::{CoefficientSet, MarketModel};
use crate::utility::Utility;

/// Lower limit for constants that must be strictly positive.
const POSITIVE: f64 = 1e-9;

/// Envelope constants, minimal subject to their strict lower limits.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "case", rename_all = "kebab-case")]
pub enum BoundsReport {
    /// γ ∈ (0,1): `a₁ = e^{−aT} ≤ P ≤ a₂ = 2e^{aT}`.
    PowerPositive { a: f64, a1: f64, a2: f64 },
    /// γ < 0: `a₁′ = e^{−a′(1−γ)T} ≤ P ≤ a₂′ = e^{a′T} + (ε^γ/a′)(e^{a′T} − 1)`.
    PowerNegative { a: f64, a1: f64, a2: f64, eps: f64 },
    /// `h ≥ e^{−kT}`.
    Log { k: f64, floor: f64 },
    /// `ε ≤ P ≤ a` for the multiplicative form.
    ExpDeterministic { a1: f64, a2: f64, a3: f64, eps: f64, a: f64 },
    /// `|P| ≤ k`.
    ExpRandom { k1: f64, k: f64 },
}

impl BoundsReport {
    /// `(lower, upper)` envelope of the field the constants bound.
    pub fn envelope(&self) -> (f64, f64) {
        match *self {
            BoundsReport::PowerPositive { a1, a2, .. } | BoundsReport::PowerNegative { a1, a2, .. } => (a1, a2),
            BoundsReport::Log { floor, .. } => (floor, f64::INFINITY),
            BoundsReport::ExpDeterministic { eps, a, .. } => (eps, a),
            BoundsReport::ExpRandom { k, .. } => (-k, k),
        }
    }

    pub fn case_name(&self) -> &'static str {
        match self {
            BoundsReport::PowerPositive { .. } => "power-positive",
            BoundsReport::PowerNegative { .. } => "power-negative",
            BoundsReport::Log { .. } => "log",
            BoundsReport::ExpDeterministic { .. } => "exp-deterministic",
            BoundsReport::ExpRandom { .. } => "exp-random",
        }
    }
}

/// Every `(t, regime, coefficients)` the sup/inf scans visit: nodes, step
/// midpoints and breakpoints, times every factor node.
fn scan(model: &MarketModel, grid: &TimeGrid, mut visit: impl FnMut(f64, usize, &CoefficientSet)) {
    let mut times = grid.scan_times();
    times.extend(model.breakpoints().into_iter().filter(|&t| t <= model.horizon));
    for x in model.factor_nodes() {
        for i in 0..model.ell() {
            for &t in &times {
                visit(t, i, &model.coeff_unchecked(t, i, x));
            }
        }
    }
}

/// Envelope constants for `utility`. `eps` is the consumption witness and
/// is required for power utility with γ < 0.
pub fn compute_bounds(model: &MarketModel, utility: &Utility, eps: Option<f64>, grid: &TimeGrid) -> Result<BoundsReport> {
    utility.check()?;
    let horizon = model.horizon;
    match *utility {
        Utility::Power { gamma } if gamma > 0.0 => {
            let mut a = 1.0 + POSITIVE;
            scan(model, grid, |_, _, c| {
                let kappa = gamma / (2.0 * (1.0 - gamma)) * c.sharpe_sq() - c.rho + gamma * c.r;
                a = a.max(c.rho - gamma * c.r).max(kappa / (1.0 - gamma));
            });
            Ok(BoundsReport::PowerPositive { a, a1: (-a * horizon).exp(), a2: 2.0 * (a * horizon).exp() })
        }
        Utility::Power { gamma } => {
            let eps = eps.ok_or_else(|| Error::Config("γ < 0 bounds need the consumption witness ε".into()))?;
            let mut a = POSITIVE;
            scan(model, grid, |_, _, c| {
                let kappa = gamma / (2.0 * (1.0 - gamma)) * c.sharpe_sq() - c.rho + gamma * c.r;
                a = a.max(-kappa / (1.0 - gamma)).max(-c.rho + gamma * c.r - gamma * eps);
            });
            let grow = (a * horizon).exp();
            let a2 = grow + eps.powf(gamma) / a * (a * horizon).exp_m1();
            Ok(BoundsReport::PowerNegative { a, a1: (-a * (1.0 - gamma) * horizon).exp(), a2, eps })
        }
        Utility::Log => {
            let mut k = POSITIVE;
            scan(model, grid, |_, _, c| k = k.max(c.rho));
            Ok(BoundsReport::Log { k, floor: (-k * horizon).exp() })
        }
        Utility::Exp { beta } => {
            if model.rate_is_deterministic_common() {
                deterministic_rate_bounds(model, grid)
            } else {
                let hr = solve_exp_h_random(model, grid)?;
                random_rate_bounds(model, beta, &hr, grid)
            }
        }
    }
}

fn deterministic_rate_bounds(model: &MarketModel, grid: &TimeGrid) -> Result<BoundsReport> {
    let rate = DeterministicRate::from_model(model)?;
    let (mut a1, mut a2, mut a3) = (POSITIVE, POSITIVE, f64::INFINITY);
    scan(model, grid, |t, _, c| {
        let h = rate.h(t);
        let ent = h * (1.0 - h.ln());
        a1 = a1.max(-c.rho + ent);
        a2 = a2.max(-(0.5 * c.sharpe_sq() - c.rho + ent));
        a3 = a3.min(h);
    });
    let a3 = a3.max(POSITIVE);
    let horizon = model.horizon;
    Ok(BoundsReport::ExpDeterministic {
        a1,
        a2,
        a3,
        eps: (-(a2 / a3) * (-(-a3 * horizon).exp_m1())).exp(),
        a: (a1 * horizon).exp(),
    })
}

/// Constants of the random-rate case given the solved `h`.
pub fn random_rate_bounds(model: &MarketModel, beta: f64, hr: &RandomRateH, grid: &TimeGrid) -> Result<BoundsReport> {
    let mut k1 = POSITIVE;
    scan(model, grid, |_, _, c| k1 = k1.max(-c.r));
    let aux = hr.aux();
    let ell = model.ell();

    // running term of the discounted expectation, per regime
    let phi = |st: &Stage, i: usize| -> Result<f64> {
        let c = model.coeff_unchecked(st.t_coef, i, st.x);
        let theta = market_price(&c)?;
        let h = hr.h_at(&aux, st);
        let prem: f64 = match hr.closed {
            Some(_) => theta.iter().map(|a| (h * a).powi(2)).sum(),
            None => theta.iter().zip(aux.grad(st, 0)).map(|(a, e)| (h * a + e).powi(2)).sum(),
        };
        Ok(prem / (2.0 * beta * h.powi(3)) + c.rho / (beta * h) - (1.0 - h.ln()) / beta
            - model.generator.rate(i, i) / (beta * h))
    };

    // −inf of ρ/(βh) − (1/β)(1 − ln h) over nodes
    for k in 0..=grid.steps {
        let step = k.min(grid.steps - 1);
        let t = grid.node(k);
        for x in model.factor_nodes() {
            let st = Stage { t, t_coef: t.min(model.horizon), step, x };
            let h = hr.h_at(&aux, &st);
            for i in 0..ell {
                let c = model.coeff_unchecked(t, i, x);
                k1 = k1.max(-(c.rho / (beta * h) - (1.0 - h.ln()) / beta));
            }
        }
    }

    // sup of the linear expectation w under the shifted measure
    let frozen = MarketModel { generator: crate::market::RegimeGenerator::frozen(ell), ..model.clone() };
    let w = integrate(Problem {
        model: &frozen,
        grid: *grid,
        label: "w",
        terminal: vec![0.0; ell],
        envelope: None,
        generator: |st: &Stage, i: usize, u: &[f64], z: &[f64]| {
            let c = model.coeff_unchecked(st.t_coef, i, st.x);
            let theta = market_price(&c)?;
            let drift: f64 = theta.iter().zip(z).map(|(a, b)| a * b).sum();
            Ok(phi(st, i)? - c.r * u[i] - drift)
        },
    })?;
    k1 = k1.max(w.max_value());
    let k = (k1 * model.horizon).exp().max(k1);
    Ok(BoundsReport::ExpRandom { k1, k })
}
