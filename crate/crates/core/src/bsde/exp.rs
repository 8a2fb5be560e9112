//! Exponential utility: deterministic and factor-driven interest rates.

use nalgebra::DVector;

use super::bounds::{compute_bounds, random_rate_bounds, BoundsReport};
use super::engine::{integrate, Aux, Envelope, Problem, Stage};
use super::field::RegimeField;
use super::grid::TimeGrid;
use crate::constraints::{exp_hamiltonian, ConstraintMode, ConstraintSet};
use crate::error::{Error, Result};
use crate::market::{CoefficientSet, MarketModel};
use crate::utility::Utility;

/// Piecewise-constant deterministic interest rate with the closed-form
/// `p(t) = e^{−∫_t^T r} + ∫_t^T e^{−∫_t^s r} ds` and `h = 1/p`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicRate {
    starts: Vec<f64>,
    rates: Vec<f64>,
    /// `p` at each piece's right end.
    p_right: Vec<f64>,
    horizon: f64,
}

impl DeterministicRate {
    pub fn from_model(model: &MarketModel) -> Result<Self> {
        if !model.rate_is_deterministic_common() {
            return Err(Error::Precondition(
                "interest rate must be deterministic and common to all regimes".into(),
            ));
        }
        let curve = &model.regimes[0].r;
        let starts = curve.starts().to_vec();
        let rates = curve.values().to_vec();
        let horizon = model.horizon;
        let mut p_right = vec![1.0; starts.len()];
        let mut p = 1.0;
        for k in (0..starts.len()).rev() {
            p_right[k] = p;
            let right = if k + 1 < starts.len() { starts[k + 1] } else { horizon };
            p = Self::carry(rates[k], right - starts[k].max(0.0), p);
        }
        Ok(Self { starts, rates, p_right, horizon })
    }

    /// `p` at the left end of an interval of length `len` with rate `r`.
    fn carry(r: f64, len: f64, p_right: f64) -> f64 {
        if len <= 0.0 {
            return p_right;
        }
        let decay = (-r * len).exp();
        let integral = if r == 0.0 { len } else { -(-r * len).exp_m1() / r };
        decay * p_right + integral
    }

    pub fn p(&self, t: f64) -> f64 {
        let k = match self.starts.partition_point(|&s| s <= t) {
            0 => 0,
            k => k - 1,
        };
        let right = if k + 1 < self.starts.len() { self.starts[k + 1] } else { self.horizon };
        Self::carry(self.rates[k], right - t, self.p_right[k])
    }

    pub fn h(&self, t: f64) -> f64 {
        1.0 / self.p(t)
    }

    pub fn rate(&self, t: f64) -> f64 {
        let k = match self.starts.partition_point(|&s| s <= t) {
            0 => 0,
            k => k - 1,
        };
        self.rates[k]
    }
}

/// Closed-form `h` sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HCurve {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub rate: DeterministicRate,
}

impl HCurve {
    pub fn at(&self, t: f64) -> f64 {
        self.rate.h(t)
    }

    /// As a one-regime field.
    pub fn to_field(&self) -> RegimeField {
        let mut f = RegimeField::zeros("h", self.grid, 1, vec![], 1);
        f.values[0].copy_from_slice(&self.values);
        f
    }
}

/// `h_t` in closed form for a deterministic common rate.
pub fn solve_exp_h_deterministic(model: &MarketModel, grid: &TimeGrid) -> Result<HCurve> {
    let rate = DeterministicRate::from_model(model)?;
    let values = grid.nodes().iter().map(|&t| rate.h(t)).collect();
    Ok(HCurve { grid: *grid, values, rate })
}

fn check_exp_inputs(set: &ConstraintSet, beta: f64) -> Result<()> {
    Utility::Exp { beta }.check()?;
    set.check_mode(ConstraintMode::Exponential)
}

fn exp_term(set: &ConstraintSet, beta: f64, h: f64, z: &[f64], c: &CoefficientSet) -> Result<f64> {
    exp_hamiltonian(set, beta, h, z, c).map(|r| r.value)
}

/// `h(1 − ln h)`.
fn entropy(h: f64) -> f64 {
    h * (1.0 - h.ln())
}

/// The multiplicative form `P = e^{−βY}` with `P_T = 1`.
pub fn solve_exp_p_form(
    model: &MarketModel,
    set: &ConstraintSet,
    beta: f64,
    h: &HCurve,
    grid: &TimeGrid,
) -> Result<RegimeField> {
    check_exp_inputs(set, beta)?;
    let env = match compute_bounds(model, &Utility::Exp { beta }, None, grid)? {
        BoundsReport::ExpDeterministic { eps, a, .. } => Some(Envelope { lower: eps, upper: a }),
        _ => None,
    };
    let q = &model.generator;
    integrate(Problem {
        model,
        grid: *grid,
        label: "P",
        terminal: vec![1.0; model.ell()],
        envelope: env,
        generator: |st: &Stage, i: usize, u: &[f64], lam: &[f64]| {
            let c = model.coeff_unchecked(st.t_coef, i, st.x);
            let hv = h.at(st.t);
            let p = u[i];
            if !(p > 0.0) {
                return Err(Error::Instability(format!("P-form lost positivity ({p}); refine the grid")));
            }
            let z: Vec<f64> = lam.iter().map(|l| -l / (beta * p)).collect();
            let f = -beta * p * exp_term(set, beta, hv, &z, &c)?;
            Ok(f - hv * p * p.ln() - c.rho * p + entropy(hv) * p + q.couple(i, u))
        },
    })
}

/// The additive form `Y` with `Y_T = 0`.
pub fn solve_exp_y(
    model: &MarketModel,
    set: &ConstraintSet,
    beta: f64,
    h: &HCurve,
    grid: &TimeGrid,
) -> Result<RegimeField> {
    check_exp_inputs(set, beta)?;
    let q = &model.generator;
    let ell = model.ell();
    integrate(Problem {
        model,
        grid: *grid,
        label: "Y",
        terminal: vec![0.0; ell],
        envelope: None,
        generator: |st: &Stage, i: usize, u: &[f64], z: &[f64]| {
            let c = model.coeff_unchecked(st.t_coef, i, st.x);
            let hv = h.at(st.t);
            let f = exp_term(set, beta, hv, z, &c)?;
            let zz: f64 = z.iter().map(|v| v * v).sum();
            let mut coupling = 0.0;
            for j in 0..ell {
                if j != i {
                    coupling += q.rate(i, j) * (-beta * (u[j] - u[i])).exp_m1();
                }
            }
            Ok(f - hv * u[i] - 0.5 * beta * zz + c.rho / beta - entropy(hv) / beta - coupling / beta)
        },
    })
}

/// `(p, h = 1/p)` for a factor-driven rate; `h` carries `η = −q/p²` as its
/// gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomRateH {
    pub p: RegimeField,
    pub h: RegimeField,
    /// Closed form when the rate does not depend on the factor (ODE mode).
    pub closed: Option<DeterministicRate>,
}

impl RandomRateH {
    pub(crate) fn aux(&self) -> Aux<'_> {
        Aux::Nodes { field: &self.h }
    }

    pub(crate) fn h_at(&self, aux: &Aux<'_>, st: &Stage) -> f64 {
        match &self.closed {
            Some(r) => r.h(st.t),
            None => aux.value(st, 0),
        }
    }
}

/// `σ⁻¹b` for a square volatility matrix.
pub(crate) fn market_price(c: &CoefficientSet) -> Result<DVector<f64>> {
    if c.m() != c.n() {
        return Err(Error::Precondition("random-rate case needs m = n".into()));
    }
    c.sigma
        .clone()
        .lu()
        .solve(&c.b)
        .ok_or_else(|| Error::Domain("σ is singular".into()))
}

/// Solves the linear system for `p` and returns `h = 1/p`, `η = −q/p²`.
pub fn solve_exp_h_random(model: &MarketModel, grid: &TimeGrid) -> Result<RandomRateH> {
    if model.factor.is_none() {
        let rate = DeterministicRate::from_model(model)?;
        let mut p = RegimeField::zeros("p", *grid, 1, vec![], model.n);
        let mut h = RegimeField::zeros("h", *grid, 1, vec![], model.n);
        for k in 0..=grid.steps {
            let t = grid.node(k);
            p.values[0][k] = rate.p(t);
            h.values[0][k] = 1.0 / p.values[0][k];
        }
        return Ok(RandomRateH { p, h, closed: Some(rate) });
    }
    let single = MarketModel {
        generator: crate::market::RegimeGenerator::frozen(1),
        regimes: vec![model.regimes[0].clone()],
        ..model.clone()
    };
    let p = integrate(Problem {
        model: &single,
        grid: *grid,
        label: "p",
        terminal: vec![1.0],
        envelope: None,
        generator: |st: &Stage, _i: usize, u: &[f64], q: &[f64]| {
            let c = single.coeff_unchecked(st.t_coef, 0, st.x);
            let theta = market_price(&c)?;
            let drift: f64 = q.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            Ok(1.0 - c.r * u[0] - drift)
        },
    })?;
    if p.min_value() <= 0.0 {
        return Err(Error::Instability(format!(
            "p reached {} ≤ 0; refine the grid",
            p.min_value()
        )));
    }
    let mut h = p.clone();
    h.label = "h".into();
    let n = p.grad_dim;
    for (v, g) in h.values[0].iter_mut().zip(h.gradients[0].chunks_mut(n)) {
        let pv = *v;
        *v = 1.0 / pv;
        for e in g.iter_mut() {
            *e = -*e / (pv * pv);
        }
    }
    Ok(RandomRateH { p, h, closed: None })
}

/// `ψ(y) = max(−k, min(y, k))`.
fn clip(y: f64, k: f64) -> f64 {
    y.clamp(-k, k)
}

/// `|hσ⁻¹b + η|² / (2βh³)` and friends shared by the random-rate systems.
struct RandomTerms {
    h: f64,
    theta: DVector<f64>,
    eta: Vec<f64>,
}

fn random_terms(model: &MarketModel, hr: &RandomRateH, aux: &Aux<'_>, st: &Stage) -> Result<(CoefficientSet, RandomTerms)> {
    let c = model.coeff_unchecked(st.t_coef, 0, st.x);
    let theta = market_price(&c)?;
    let h = hr.h_at(aux, st);
    let eta = match hr.closed {
        Some(_) => vec![0.0; model.n],
        None => aux.grad(st, 0).to_vec(),
    };
    Ok((c, RandomTerms { h, theta, eta }))
}

impl RandomTerms {
    fn premium_sq(&self) -> f64 {
        self.theta.iter().zip(&self.eta).map(|(a, e)| (self.h * a + e).powi(2)).sum()
    }
}

/// The translated system `P` with `Y = hP`, `P_T = 0`, coupling truncated
/// at the bound `k`. Fails if the truncation is active at any node.
pub fn solve_exp_p_random(model: &MarketModel, beta: f64, hr: &RandomRateH, grid: &TimeGrid) -> Result<RegimeField> {
    Utility::Exp { beta }.check()?;
    let k = match random_rate_bounds(model, beta, hr, grid)? {
        BoundsReport::ExpRandom { k, .. } => k,
        _ => unreachable!("random_rate_bounds returns the random-rate case"),
    };
    let q = &model.generator;
    let ell = model.ell();
    let aux = hr.aux();
    let field = integrate(Problem {
        model,
        grid: *grid,
        label: "P",
        terminal: vec![0.0; ell],
        envelope: Some(Envelope { lower: -k, upper: k }),
        generator: |st: &Stage, i: usize, u: &[f64], lam: &[f64]| {
            let (c, rt) = random_terms(model, hr, &aux, st)?;
            let rho = model.coeff_unchecked(st.t_coef, i, st.x).rho;
            let h = rt.h;
            let drift: f64 = rt.theta.iter().zip(lam).map(|(a, l)| a * l).sum();
            let mut coupling = 0.0;
            for j in 0..ell {
                coupling += q.rate(i, j) * (-beta * h * (clip(u[j], k) - clip(u[i], k))).exp();
            }
            Ok(-c.r * u[i] - drift + rt.premium_sq() / (2.0 * beta * h.powi(3)) + rho / (beta * h)
                - (1.0 - h.ln()) / beta
                - coupling / (beta * h))
        },
    })?;
    let worst = field.values.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if worst >= k {
        return Err(Error::Instability(format!(
            "truncation active: |P| reached {worst} ≥ k = {k}; the bound constant is miscomputed"
        )));
    }
    Ok(field)
}

/// The additive random-rate system `Y` with `Y_T = 0`.
pub fn solve_exp_y_random(model: &MarketModel, beta: f64, hr: &RandomRateH, grid: &TimeGrid) -> Result<RegimeField> {
    Utility::Exp { beta }.check()?;
    let q = &model.generator;
    let ell = model.ell();
    let aux = hr.aux();
    integrate(Problem {
        model,
        grid: *grid,
        label: "Y",
        terminal: vec![0.0; ell],
        envelope: None,
        generator: |st: &Stage, i: usize, u: &[f64], z: &[f64]| {
            let (_, rt) = random_terms(model, hr, &aux, st)?;
            let rho = model.coeff_unchecked(st.t_coef, i, st.x).rho;
            let h = rt.h;
            let drift: f64 = rt
                .theta
                .iter()
                .zip(&rt.eta)
                .zip(z)
                .map(|((a, e), zz)| (a + e / h) * zz)
                .sum();
            let mut coupling = 0.0;
            for j in 0..ell {
                if j != i {
                    coupling += q.rate(i, j) * (-beta * (u[j] - u[i])).exp_m1();
                }
            }
            Ok(-h * u[i] - drift + rt.premium_sq() / (2.0 * beta * h * h) + rho / beta - entropy(h) / beta
                - coupling / beta)
        },
    })
}
