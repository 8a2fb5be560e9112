//! Optimal feedback controls and analytic values from solved fields.
//!
//! Every strategy is stored as an affine map of wealth per
//! `(regime, time node, factor node)`:
//! `π = π₀ + π₁·x`, `c = c₀ + c₁·x`. Power and log strategies are
//! proportions with `π₁ = 0`, `c₁ = 0`; exponential strategies are amounts.
//! Time lookups use the left grid node; factor lookups interpolate linearly.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::Serialize;

use crate::bsde::{
    solve_exp_h_deterministic, solve_exp_h_random, solve_exp_y, solve_exp_y_random, solve_log_h, solve_log_p,
    solve_power, HCurve, RandomRateH, RegimeField, TimeGrid,
};
use crate::constraints::{exp_hamiltonian, log_hamiltonian, power_hamiltonian, ConstraintSet};
use crate::error::{Error, Result};
use crate::market::MarketModel;
use crate::utility::Utility;

/// Solved fields of one utility case.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)] // built once per solve
pub enum Solution {
    Power { gamma: f64, p: RegimeField },
    Log { h: RegimeField, p: RegimeField },
    ExpDeterministic { beta: f64, h: HCurve, y: RegimeField },
    ExpRandom { beta: f64, h: RandomRateH, y: RegimeField },
}

impl Solution {
    pub fn utility(&self) -> Utility {
        match *self {
            Solution::Power { gamma, .. } => Utility::Power { gamma },
            Solution::Log { .. } => Utility::Log,
            Solution::ExpDeterministic { beta, .. } | Solution::ExpRandom { beta, .. } => Utility::Exp { beta },
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.main().grid
    }

    /// The regime-indexed field (`P` or `Y`).
    pub fn main(&self) -> &RegimeField {
        match self {
            Solution::Power { p, .. } | Solution::Log { p, .. } => p,
            Solution::ExpDeterministic { y, .. } | Solution::ExpRandom { y, .. } => y,
        }
    }

    /// Named fields for export.
    pub fn fields(&self) -> Vec<RegimeField> {
        match self {
            Solution::Power { p, .. } => vec![p.clone()],
            Solution::Log { h, p } => vec![h.clone(), p.clone()],
            Solution::ExpDeterministic { h, y, .. } => vec![h.to_field(), y.clone()],
            Solution::ExpRandom { h, y, .. } => vec![h.p.clone(), h.h.clone(), y.clone()],
        }
    }
}

/// Solves every field needed by `utility`. Exponential utility uses the
/// closed-form `h` when the rate is deterministic and common to all
/// regimes, and the factor-driven systems otherwise.
pub fn solve_case(model: &MarketModel, utility: &Utility, set: &ConstraintSet, grid: &TimeGrid) -> Result<Solution> {
    utility.check()?;
    match *utility {
        Utility::Power { gamma } => Ok(Solution::Power { gamma, p: solve_power(model, gamma, set, grid)? }),
        Utility::Log => {
            let h = solve_log_h(model, grid)?;
            let p = solve_log_p(model, set, &h, grid)?;
            Ok(Solution::Log { h, p })
        }
        Utility::Exp { beta } => {
            if model.rate_is_deterministic_common() {
                let h = solve_exp_h_deterministic(model, grid)?;
                let y = solve_exp_y(model, set, beta, &h, grid)?;
                Ok(Solution::ExpDeterministic { beta, h, y })
            } else {
                if !set.is_unconstrained() {
                    return Err(Error::Config("a factor-driven rate requires an unconstrained portfolio".into()));
                }
                let h = solve_exp_h_random(model, grid)?;
                let y = solve_exp_y_random(model, beta, &h, grid)?;
                Ok(Solution::ExpRandom { beta, h, y })
            }
        }
    }
}

/// Affine control coefficients at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineControl {
    pub pi0: Vec<f64>,
    pub pi1: Vec<f64>,
    pub c0: f64,
    pub c1: f64,
}

impl AffineControl {
    pub fn zeros(m: usize) -> Self {
        Self { pi0: vec![0.0; m], pi1: vec![0.0; m], c0: 0.0, c1: 0.0 }
    }
}

/// Feedback map `(t, regime, wealth, factor) → (π, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackStrategy {
    pub utility: Utility,
    pub grid: TimeGrid,
    pub factor: Vec<f64>,
    pub ell: usize,
    pub m: usize,
    pub set: ConstraintSet,
    /// Per `(i, k, j)`: `[π₀ (m), π₁ (m), c₀, c₁]`.
    table: Vec<f64>,
}

impl FeedbackStrategy {
    fn stride(&self) -> usize {
        2 * self.m + 2
    }

    fn nx(&self) -> usize {
        self.factor.len().max(1)
    }

    fn offset(&self, i: usize, k: usize, j: usize) -> usize {
        ((i * (self.grid.steps + 1) + k) * self.nx() + j) * self.stride()
    }

    /// Whether controls are amounts (exponential) rather than proportions.
    pub fn in_amounts(&self) -> bool {
        matches!(self.utility, Utility::Exp { .. })
    }

    /// Affine coefficients at time node `k`, regime `i`, factor value `x`.
    pub fn affine_at(&self, k: usize, i: usize, x: f64, out: &mut AffineControl) {
        let m = self.m;
        let (lo, hi, w) = factor_weights(&self.factor, x);
        let (a, b) = (self.offset(i, k, lo), self.offset(i, k, hi));
        let blend = |d: usize| (1.0 - w) * self.table[a + d] + w * self.table[b + d];
        for d in 0..m {
            out.pi0[d] = blend(d);
            out.pi1[d] = blend(m + d);
        }
        out.c0 = blend(2 * m);
        out.c1 = blend(2 * m + 1);
    }

    /// `(π, c)` at time `t` (left node), regime `i`, wealth and factor value.
    pub fn control(&self, t: f64, i: usize, wealth: f64, x: f64) -> (Vec<f64>, f64) {
        let k = self.grid.left_index(t);
        let mut a = AffineControl::zeros(self.m);
        self.affine_at(k, i, x, &mut a);
        let pi = a.pi0.iter().zip(&a.pi1).map(|(p0, p1)| p0 + p1 * wealth).collect();
        (pi, a.c0 + a.c1 * wealth)
    }

    /// Visits the cached coefficients of every `(regime, node, factor node)`.
    pub fn for_each_node(&self, mut f: impl FnMut(&AffineControl)) {
        let m = self.m;
        let mut a = AffineControl::zeros(m);
        for row in self.table.chunks_exact(self.stride()) {
            a.pi0.copy_from_slice(&row[..m]);
            a.pi1.copy_from_slice(&row[m..2 * m]);
            a.c0 = row[2 * m];
            a.c1 = row[2 * m + 1];
            f(&a);
        }
    }

    /// CSV export: controls for proportional strategies, affine
    /// coefficients of wealth for amount strategies.
    pub fn to_csv(&self) -> String {
        let m = self.m;
        let mut s = String::from("t,regime");
        if !self.factor.is_empty() {
            s.push_str(",factor");
        }
        if self.in_amounts() {
            for d in 1..=m {
                let _ = write!(s, ",pi0_{d}");
            }
            for d in 1..=m {
                let _ = write!(s, ",pi1_{d}");
            }
            s.push_str(",c0,c1\n");
        } else {
            for d in 1..=m {
                let _ = write!(s, ",pi_{d}");
            }
            s.push_str(",c\n");
        }
        for i in 0..self.ell {
            for k in 0..=self.grid.steps {
                for j in 0..self.nx() {
                    let _ = write!(s, "{:.16e},{}", self.grid.node(k), i + 1);
                    if !self.factor.is_empty() {
                        let _ = write!(s, ",{:.16e}", self.factor[j]);
                    }
                    let o = self.offset(i, k, j);
                    let row = &self.table[o..o + self.stride()];
                    let cols: &[f64] = if self.in_amounts() { row } else { &[&row[..m], &row[2 * m..2 * m + 1]].concat() };
                    for v in cols {
                        let _ = write!(s, ",{v:.16e}");
                    }
                    s.push('\n');
                }
            }
        }
        s
    }
}

fn factor_weights(factor: &[f64], x: f64) -> (usize, usize, f64) {
    if factor.len() < 2 || x <= factor[0] {
        return (0, 0, 0.0);
    }
    let last = factor.len() - 1;
    if x >= factor[last] {
        return (last, last, 0.0);
    }
    let hi = factor.partition_point(|&v| v <= x).min(last);
    let lo = hi - 1;
    (lo, hi, (x - factor[lo]) / (factor[hi] - factor[lo]))
}

/// Builds the feedback strategy from solved fields. Power and log argmaxes
/// are computed once per node.
pub fn extract_strategy(model: &MarketModel, sol: &Solution, set: &ConstraintSet) -> Result<FeedbackStrategy> {
    let main = sol.main();
    if main.ell() != model.ell() {
        return Err(Error::Config("solution and model have different regime counts".into()));
    }
    if main.is_factor_mode() != model.factor_enabled() {
        return Err(Error::Config("solution and model disagree on factor mode".into()));
    }
    if let Solution::ExpRandom { .. } = sol {
        if !set.is_unconstrained() {
            return Err(Error::Config("random-rate strategies need an unconstrained portfolio".into()));
        }
    }
    let grid = sol.grid();
    let m = model.m;
    let mut strat = FeedbackStrategy {
        utility: sol.utility(),
        grid,
        factor: main.factor.clone(),
        ell: model.ell(),
        m,
        set: set.clone(),
        table: Vec::new(),
    };
    let nx = strat.nx();
    let xs = if main.factor.is_empty() { vec![0.0] } else { main.factor.clone() };
    let mut table = vec![0.0; model.ell() * (grid.steps + 1) * nx * strat.stride()];
    for i in 0..model.ell() {
        for k in 0..=grid.steps {
            let t = grid.node(k);
            for (j, &x) in xs.iter().enumerate() {
                let c = model.coeff_unchecked(t, i, x);
                let row = control_at(sol, set, &c, i, k, j)?;
                let o = strat.offset(i, k, j);
                table[o..o + m].copy_from_slice(&row.pi0);
                table[o + m..o + 2 * m].copy_from_slice(&row.pi1);
                table[o + 2 * m] = row.c0;
                table[o + 2 * m + 1] = row.c1;
            }
        }
    }
    strat.table = table;
    Ok(strat)
}

fn control_at(
    sol: &Solution,
    set: &ConstraintSet,
    c: &crate::market::CoefficientSet,
    i: usize,
    k: usize,
    j: usize,
) -> Result<AffineControl> {
    let m = c.m();
    let mut out = AffineControl::zeros(m);
    match sol {
        Solution::Power { gamma, p } => {
            let r = power_hamiltonian(set, *gamma, p.value(i, k, j), p.grad(i, k, j), c)?;
            out.pi0 = r.pi;
            out.c0 = r.c.unwrap_or(0.0);
        }
        Solution::Log { h, .. } => {
            let r = log_hamiltonian(set, h.value(i, k, j), h.grad(i, k, j), c)?;
            out.pi0 = r.pi;
            out.c0 = r.c.unwrap_or(0.0);
        }
        Solution::ExpDeterministic { beta, h, y } => {
            let hv = h.values[k];
            let r = exp_hamiltonian(set, *beta, hv, y.grad(i, k, j), c)?;
            out.pi0 = r.pi;
            out.c0 = y.value(i, k, j) - hv.ln() / beta;
            out.c1 = hv;
        }
        Solution::ExpRandom { beta, h, y } => {
            let hv = h.h.value(0, k, j);
            let eta = DVector::from_column_slice(h.h.grad(0, k, j));
            let z = DVector::from_column_slice(y.grad(i, k, j));
            let theta = c
                .sigma
                .clone()
                .lu()
                .solve(&c.b)
                .ok_or_else(|| Error::Domain("σ is singular".into()))?;
            let st_inv = c.sigma.transpose().lu();
            let scale = -1.0 / (beta * hv * hv);
            let a = st_inv
                .solve(&(beta * hv * &z - hv * &theta - &eta))
                .ok_or_else(|| Error::Domain("σ is singular".into()))?;
            let b = st_inv
                .solve(&(beta * hv * &eta))
                .ok_or_else(|| Error::Domain("σ is singular".into()))?;
            out.pi0 = (scale * a).iter().copied().collect();
            out.pi1 = (scale * b).iter().copied().collect();
            out.c0 = y.value(i, k, j) - hv.ln() / beta;
            out.c1 = hv;
        }
    }
    if out.pi0.len() != m {
        return Err(Error::Config("control dimension mismatch".into()));
    }
    Ok(out)
}

/// Analytic value `V(x, i₀)` and the fields it reads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueReport {
    pub utility: String,
    pub wealth: f64,
    /// Regime, numbered from 1.
    pub regime: usize,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
}

/// `V(x, i₀)` at time 0; in factor mode fields are read at the factor's
/// initial value. `i0` is 0-based.
pub fn value_at(model: &MarketModel, sol: &Solution, x: f64, i0: usize) -> Result<ValueReport> {
    if i0 >= model.ell() {
        return Err(Error::Domain(format!("regime index {i0} out of range for ℓ = {}", model.ell())));
    }
    let xf = model.factor.as_ref().map_or(0.0, |f| f.x0);
    let positive = |x: f64| -> Result<()> {
        if x > 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("wealth must be positive, got {x}")))
        }
    };
    let mut rep = ValueReport {
        utility: sol.utility().name().to_string(),
        wealth: x,
        regime: i0 + 1,
        value: 0.0,
        p0: None,
        h0: None,
        y0: None,
    };
    match sol {
        Solution::Power { gamma, p } => {
            positive(x)?;
            let p0 = p.value_at(i0, 0, xf);
            rep.value = x.powf(*gamma) / gamma * p0;
            rep.p0 = Some(p0);
        }
        Solution::Log { h, p } => {
            positive(x)?;
            let (h0, p0) = (h.value_at(i0, 0, xf), p.value_at(i0, 0, xf));
            rep.value = h0 * x.ln() + p0;
            rep.h0 = Some(h0);
            rep.p0 = Some(p0);
        }
        Solution::ExpDeterministic { beta, h, y } => {
            let (h0, y0) = (h.values[0], y.value_at(i0, 0, xf));
            rep.value = -(-beta * (h0 * x + y0)).exp();
            rep.h0 = Some(h0);
            rep.y0 = Some(y0);
        }
        Solution::ExpRandom { beta, h, y } => {
            let (h0, y0) = (h.h.value_at(0, 0, xf), y.value_at(i0, 0, xf));
            rep.value = -(-beta * (h0 * x + y0)).exp();
            rep.h0 = Some(h0);
            rep.y0 = Some(y0);
        }
    }
    if !rep.value.is_finite() {
        return Err(Error::Instability(format!("value {} is not finite", rep.value)));
    }
    Ok(rep)
}
