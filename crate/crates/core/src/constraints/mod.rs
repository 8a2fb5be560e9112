//! Closed convex constraint sets on `(π, c)` and the pointwise Hamiltonian
//! maximisers built on them.
//!
//! For power and log utility the set Θ lives in `ℝ^m × ℝ₊` (proportions of
//! wealth). Exponential utility constrains only the portfolio amount; its set
//! Π is the portfolio part of the same family: box bounds drop the
//! consumption interval and coupled families are read at `c = 0`.

mod hamiltonian;

pub use hamiltonian::{
    exp_hamiltonian, exp_objective, log_hamiltonian, log_objective, power_hamiltonian, power_objective,
    HamiltonianResult, PG_MAX_ITER, PG_TOL,
};

use crate::error::{Error, Result};

/// Supported constraint families.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    /// `Θ = ℝ^m × ℝ₊`.
    Unconstrained,
    /// `π_j ≥ 0`.
    NoShorting,
    /// `π_j ∈ [d_j, e_j]`, `c ∈ [c_lo, c_hi]`. Bounds may be infinite.
    Box {
        pi_lower: Vec<f64>,
        pi_upper: Vec<f64>,
        c_lower: f64,
        c_upper: f64,
    },
    /// `Σπ_j + c ≤ 1`: no borrowing.
    BudgetSimplex,
    /// `a′π + a₀c ≤ bound`.
    HalfSpace { a: Vec<f64>, a0: f64, bound: f64 },
}

/// Which standing assumption the set must satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintMode {
    /// Power utility with γ ∈ (0,1): `(0, 0) ∈ Θ`.
    PowerPositive,
    /// Power utility with γ < 0 or log utility: `(0, ε) ∈ Θ`.
    PositiveConsumption { eps: f64 },
    /// Exponential utility: `0 ∈ Π`.
    Exponential,
}

/// Slack used when testing feasibility of projected points.
const FEAS_SLACK: f64 = 1e-12;

impl ConstraintSet {
    pub fn family_name(&self) -> &'static str {
        match self {
            ConstraintSet::Unconstrained => "unconstrained",
            ConstraintSet::NoShorting => "no-shorting",
            ConstraintSet::Box { .. } => "box",
            ConstraintSet::BudgetSimplex => "budget-simplex",
            ConstraintSet::HalfSpace { .. } => "half-space",
        }
    }

    /// Checks dimensions and non-emptiness for `m` assets.
    pub fn check_dims(&self, m: usize) -> Result<()> {
        match self {
            ConstraintSet::Box { pi_lower, pi_upper, c_lower, c_upper } => {
                if pi_lower.len() != m || pi_upper.len() != m {
                    return Err(Error::Config(format!("box bounds need length m={m}")));
                }
                if pi_lower.iter().zip(pi_upper).any(|(l, u)| !(l <= u) || l.is_nan()) {
                    return Err(Error::Config("box has an empty portfolio interval".into()));
                }
                if !(c_lower <= c_upper) || *c_upper < 0.0 {
                    return Err(Error::Config("box has an empty consumption interval".into()));
                }
            }
            ConstraintSet::HalfSpace { a, a0, bound } => {
                if a.len() != m {
                    return Err(Error::Config(format!("half-space normal needs length m={m}")));
                }
                if !a.iter().chain([a0, bound]).all(|v| v.is_finite()) {
                    return Err(Error::Config("half-space parameters must be finite".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Whether `(π, c)` violates none of the defining inequalities by more
    /// than `tol` (half-space violations are measured as distances).
    pub fn contains(&self, pi: &[f64], c: f64, tol: f64) -> bool {
        if c < -tol || !c.is_finite() && c != f64::INFINITY {
            return false;
        }
        match self {
            ConstraintSet::Unconstrained => true,
            ConstraintSet::NoShorting => pi.iter().all(|&p| p >= -tol),
            ConstraintSet::Box { pi_lower, pi_upper, c_lower, c_upper } => {
                pi.iter()
                    .zip(pi_lower.iter().zip(pi_upper))
                    .all(|(&p, (&l, &u))| p >= l - tol && p <= u + tol)
                    && c >= c_lower - tol
                    && c <= c_upper + tol
            }
            ConstraintSet::BudgetSimplex => {
                let s: f64 = pi.iter().sum::<f64>() + c;
                let norm = ((pi.len() + 1) as f64).sqrt();
                (s - 1.0) / norm <= tol
            }
            ConstraintSet::HalfSpace { a, a0, bound } => {
                let s: f64 = a.iter().zip(pi).map(|(x, y)| x * y).sum::<f64>() + a0 * c;
                let norm = (a.iter().map(|x| x * x).sum::<f64>() + a0 * a0).sqrt();
                if norm == 0.0 {
                    *bound >= -tol
                } else {
                    (s - bound) / norm <= tol
                }
            }
        }
    }

    /// Membership of a portfolio in the exponential-utility set Π.
    pub fn contains_pi(&self, pi: &[f64], tol: f64) -> bool {
        match self {
            ConstraintSet::Box { pi_lower, pi_upper, .. } => pi
                .iter()
                .zip(pi_lower.iter().zip(pi_upper))
                .all(|(&p, (&l, &u))| p >= l - tol && p <= u + tol),
            _ => self.contains(pi, 0.0, tol),
        }
    }

    /// Largest `c ∈ (0, 1]` with `(0, c) ∈ Θ`, used as the default ε.
    pub fn consumption_witness(&self) -> Option<f64> {
        let eps = match self {
            ConstraintSet::Unconstrained | ConstraintSet::NoShorting | ConstraintSet::BudgetSimplex => 1.0,
            ConstraintSet::Box { pi_lower, pi_upper, c_lower, c_upper } => {
                if pi_lower.iter().zip(pi_upper).any(|(&l, &u)| l > 0.0 || u < 0.0) {
                    return None;
                }
                if *c_upper <= 0.0 || *c_lower > 1.0 {
                    // c_lower > 1 still admits positive consumption
                    return (*c_lower > 1.0 && c_lower <= c_upper).then_some(*c_lower);
                }
                c_upper.min(1.0)
            }
            ConstraintSet::HalfSpace { a0, bound, .. } => {
                if *a0 <= 0.0 {
                    if *bound < 0.0 {
                        return None;
                    }
                    1.0
                } else {
                    let top = bound / a0;
                    if top <= 0.0 {
                        return None;
                    }
                    top.min(1.0)
                }
            }
        };
        Some(eps)
    }

    /// Verifies the standing assumption of the utility mode.
    pub fn check_mode(&self, mode: ConstraintMode) -> Result<()> {
        let ok = match mode {
            ConstraintMode::PowerPositive => self.contains(&self.zero_pi(), 0.0, 0.0),
            ConstraintMode::PositiveConsumption { eps } => {
                eps > 0.0 && self.contains(&self.zero_pi(), eps, 0.0)
            }
            ConstraintMode::Exponential => self.contains_pi(&self.zero_pi(), 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "{} constraint violates the standing assumption for {mode:?}",
                self.family_name()
            )))
        }
    }

    fn zero_pi(&self) -> Vec<f64> {
        let m = match self {
            ConstraintSet::Box { pi_lower, .. } => pi_lower.len(),
            ConstraintSet::HalfSpace { a, .. } => a.len(),
            _ => 1,
        };
        vec![0.0; m]
    }

    /// Projects `x = (π, c)` onto `Θ ∩ {c ≥ c_floor}` in the metric
    /// `Σ w_k d_k²` (positive weights, length m+1). Returns `Infeasible` when
    /// the intersection is empty.
    pub fn project_joint(&self, x: &mut [f64], w: &[f64], c_floor: f64) -> Result<()> {
        let m = x.len() - 1;
        match self {
            ConstraintSet::Unconstrained => {
                x[m] = x[m].max(c_floor);
            }
            ConstraintSet::NoShorting => {
                for v in &mut x[..m] {
                    *v = v.max(0.0);
                }
                x[m] = x[m].max(c_floor);
            }
            ConstraintSet::Box { pi_lower, pi_upper, c_lower, c_upper } => {
                for k in 0..m {
                    x[k] = x[k].clamp(pi_lower[k], pi_upper[k]);
                }
                let lo = c_lower.max(c_floor);
                if lo > *c_upper {
                    return Err(Error::Infeasible(format!(
                        "consumption interval [{c_lower}, {c_upper}] misses c ≥ {c_floor}"
                    )));
                }
                x[m] = x[m].clamp(lo, *c_upper);
            }
            ConstraintSet::BudgetSimplex => {
                let a = vec![1.0; m];
                project_coupled(x, w, &a, 1.0, 1.0, c_floor)?;
            }
            ConstraintSet::HalfSpace { a, a0, bound } => {
                project_coupled(x, w, a, *a0, *bound, c_floor)?;
            }
        }
        Ok(())
    }

    /// Projects a portfolio onto Π in the metric `Σ w_k d_k²`.
    pub fn project_pi(&self, x: &mut [f64], w: &[f64]) {
        match self {
            ConstraintSet::Unconstrained => {}
            ConstraintSet::NoShorting => {
                for v in x.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            ConstraintSet::Box { pi_lower, pi_upper, .. } => {
                for (k, v) in x.iter_mut().enumerate() {
                    *v = v.clamp(pi_lower[k], pi_upper[k]);
                }
            }
            ConstraintSet::BudgetSimplex => {
                let a = vec![1.0; x.len()];
                project_halfspace(x, w, &a, 1.0);
            }
            ConstraintSet::HalfSpace { a, bound, .. } => project_halfspace(x, w, a, *bound),
        }
    }

    /// Whether the set imposes nothing on the portfolio and only `c ≥ 0`.
    pub fn is_unconstrained(&self) -> bool {
        matches!(self, ConstraintSet::Unconstrained)
    }

    /// `Some((π, c))` when Θ is a single point.
    pub fn singleton(&self) -> Option<(Vec<f64>, f64)> {
        match self {
            ConstraintSet::Box { pi_lower, pi_upper, c_lower, c_upper }
                if pi_lower == pi_upper && c_lower == c_upper =>
            {
                Some((pi_lower.clone(), *c_lower))
            }
            _ => None,
        }
    }

    /// `Some(π)` when Π is a single point.
    pub fn pi_singleton(&self) -> Option<Vec<f64>> {
        match self {
            ConstraintSet::Box { pi_lower, pi_upper, .. } if pi_lower == pi_upper => Some(pi_lower.clone()),
            _ => None,
        }
    }
}

/// Projection onto `{a′x ≤ bound}` in the weighted metric.
fn project_halfspace(x: &mut [f64], w: &[f64], a: &[f64], bound: f64) {
    let s: f64 = a.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
    let viol = s - bound;
    if viol <= 0.0 {
        return;
    }
    let denom: f64 = a.iter().zip(w).map(|(p, wk)| p * p / wk).sum();
    if denom == 0.0 {
        return;
    }
    let lam = viol / denom;
    for k in 0..x.len() {
        x[k] -= lam * a[k] / w[k];
    }
}

/// Projection onto `{a′π + a₀c ≤ bound, c ≥ c_floor}`: the nearest feasible
/// point among the four active-set candidates.
fn project_coupled(x: &mut [f64], w: &[f64], a: &[f64], a0: f64, bound: f64, c_floor: f64) -> Result<()> {
    let m = a.len();
    let lhs = |y: &[f64]| a.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() + a0 * y[m];
    // slack scales with the terms summed, so far-away inputs projected onto
    // the hyperplane are not rejected for rounding
    let magnitude = |y: &[f64]| a.iter().zip(y).map(|(p, q)| (p * q).abs()).sum::<f64>() + (a0 * y[m]).abs();
    let feasible = |y: &[f64]| {
        lhs(y) <= bound + FEAS_SLACK * (1.0 + bound.abs() + magnitude(y))
            && y[m] >= c_floor - FEAS_SLACK * (1.0 + c_floor.abs())
    };
    if feasible(x) {
        return Ok(());
    }
    let dist = |y: &[f64]| -> f64 { y.iter().zip(x.iter()).zip(w).map(|((p, q), wk)| wk * (p - q) * (p - q)).sum() };

    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |cand: Vec<f64>, best: &mut Option<(f64, Vec<f64>)>| {
        if feasible(&cand) {
            let d = dist(&cand);
            if match &best { Some((bd, _)) => d < *bd, None => true } {
                *best = Some((d, cand));
            }
        }
    };

    // hyperplane a′π + a₀c = bound
    let denom: f64 = a.iter().zip(w).map(|(p, wk)| p * p / wk).sum::<f64>() + a0 * a0 / w[m];
    if denom > 0.0 {
        let lam = (lhs(x) - bound) / denom;
        let mut y = x.to_vec();
        for k in 0..m {
            y[k] -= lam * a[k] / w[k];
        }
        y[m] -= lam * a0 / w[m];
        consider(y, &mut best);
    }
    // c = c_floor
    let mut y = x.to_vec();
    y[m] = c_floor;
    consider(y.clone(), &mut best);
    // both active
    let denom_pi: f64 = a.iter().zip(w).map(|(p, wk)| p * p / wk).sum();
    if denom_pi > 0.0 {
        let lam = (lhs(&y) - bound) / denom_pi;
        for k in 0..m {
            y[k] -= lam * a[k] / w[k];
        }
        consider(y, &mut best);
    }
    match best {
        Some((_, y)) => {
            x.copy_from_slice(&y);
            Ok(())
        }
        None => Err(Error::Infeasible(format!(
            "half-space {a:?}·π + {a0}·c ≤ {bound} has no point with c ≥ {c_floor}"
        ))),
    }
}
