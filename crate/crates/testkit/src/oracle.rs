//! Reference maximiser for the pointwise Hamiltonians.
//!
//! Every constraint family is polyhedral in `π` once `c` is fixed, so the
//! portfolio part is solved exactly by enumerating active sets of the KKT
//! system and keeping the best feasible candidate. Consumption is handled
//! by golden-section search on the concave profile `c ↦ max_π φ(π, c)`.
//! The objectives are written out here from their definitions so the oracle
//! shares no arithmetic with the solver under test.

use nalgebra::{DMatrix, DVector};
use rsci_core::{CoefficientSet, ConstraintSet};

const FEAS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Maximum of the unscaled objective.
    pub best: f64,
    /// `(π, c)`, or `π` alone for exponential utility.
    pub point: Vec<f64>,
}

/// Hamiltonian inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum Case {
    Power { gamma: f64, p: f64, lambda: Vec<f64> },
    Log { h: f64, eta: Vec<f64> },
    Exp { beta: f64, h: f64, z: Vec<f64> },
}

impl Case {
    /// Whether consumption is a decision variable.
    pub fn has_consumption(&self) -> bool {
        !matches!(self, Case::Exp { .. })
    }

    /// Maps the concave objective's maximum to the reported generator term.
    pub fn scale(&self) -> f64 {
        match *self {
            Case::Power { gamma, .. } => gamma,
            Case::Log { .. } => 1.0,
            Case::Exp { h, .. } => h,
        }
    }

    /// `(curvature k, linear term)` of `−½k|σ′π|² + lin′π`.
    fn quadratic(&self, c: &CoefficientSet) -> (f64, DVector<f64>) {
        match self {
            Case::Power { gamma, p, lambda } => {
                ((1.0 - gamma) * p, *p * &c.b + &c.sigma * DVector::from_column_slice(lambda))
            }
            Case::Log { h, eta } => (*h, *h * &c.b + &c.sigma * DVector::from_column_slice(eta)),
            Case::Exp { beta, h, z } => (beta * h, &c.b - *beta * (&c.sigma * DVector::from_column_slice(z))),
        }
    }

    fn felicity(&self, c: f64) -> f64 {
        match *self {
            Case::Power { gamma, p, .. } => c.powf(gamma) / gamma - p * c,
            Case::Log { h, .. } => c.ln() - h * c,
            Case::Exp { .. } => 0.0,
        }
    }

    fn free_consumption(&self) -> f64 {
        match *self {
            Case::Power { gamma, p, .. } => p.powf(1.0 / (gamma - 1.0)),
            Case::Log { h, .. } => 1.0 / h,
            Case::Exp { .. } => 0.0,
        }
    }
}

/// The concave objective (before scaling) at `(π, c)`.
pub fn objective(case: &Case, coeffs: &CoefficientSet, pi: &[f64], c: f64) -> f64 {
    let (k, lin) = case.quadratic(coeffs);
    let pi = DVector::from_column_slice(pi);
    let v = coeffs.sigma.transpose() * &pi;
    let mut f = -0.5 * k * v.norm_squared() + lin.dot(&pi);
    if case.has_consumption() {
        f += case.felicity(c);
    }
    if f.is_nan() {
        f64::NEG_INFINITY
    } else {
        f
    }
}

/// Portfolio constraints `Gπ ≤ rhs` at consumption `c`.
fn rows(set: &ConstraintSet, m: usize, c: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut g = Vec::new();
    let mut rhs = Vec::new();
    let unit = |j: usize, s: f64| {
        let mut r = vec![0.0; m];
        r[j] = s;
        r
    };
    match set {
        ConstraintSet::Unconstrained => {}
        ConstraintSet::NoShorting => {
            for j in 0..m {
                g.push(unit(j, -1.0));
                rhs.push(0.0);
            }
        }
        ConstraintSet::Box { pi_lower, pi_upper, .. } => {
            for j in 0..m {
                if pi_lower[j].is_finite() {
                    g.push(unit(j, -1.0));
                    rhs.push(-pi_lower[j]);
                }
                if pi_upper[j].is_finite() {
                    g.push(unit(j, 1.0));
                    rhs.push(pi_upper[j]);
                }
            }
        }
        ConstraintSet::BudgetSimplex => {
            g.push(vec![1.0; m]);
            rhs.push(1.0 - c);
        }
        ConstraintSet::HalfSpace { a, a0, bound } => {
            g.push(a.clone());
            rhs.push(bound - a0 * c);
        }
    }
    (g, rhs)
}

/// Exact maximum of `−½π′Aπ + lin′π` over `Gπ ≤ rhs` by active sets.
fn qp(a: &DMatrix<f64>, lin: &DVector<f64>, g: &[Vec<f64>], rhs: &[f64]) -> Option<(f64, DVector<f64>)> {
    let m = lin.len();
    let value = |pi: &DVector<f64>| lin.dot(pi) - 0.5 * pi.dot(&(a * pi));
    let feasible = |pi: &DVector<f64>| {
        g.iter().zip(rhs).all(|(row, &b)| {
            let s: f64 = row.iter().zip(pi.iter()).map(|(x, y)| x * y).sum();
            s <= b + FEAS_TOL * (1.0 + b.abs())
        })
    };
    let mut best: Option<(f64, DVector<f64>)> = None;
    let k = g.len();
    for mask in 0u32..(1 << k) {
        let active: Vec<usize> = (0..k).filter(|&i| mask & (1 << i) != 0).collect();
        if active.len() > m {
            continue;
        }
        let s = active.len();
        let mut kkt = DMatrix::zeros(m + s, m + s);
        let mut b = DVector::zeros(m + s);
        kkt.view_mut((0, 0), (m, m)).copy_from(a);
        for (r, &i) in active.iter().enumerate() {
            for j in 0..m {
                kkt[(m + r, j)] = g[i][j];
                kkt[(j, m + r)] = g[i][j];
            }
            b[m + r] = rhs[i];
        }
        b.rows_mut(0, m).copy_from(lin);
        let Some(sol) = kkt.lu().solve(&b) else { continue };
        let pi = sol.rows(0, m).into_owned();
        if !pi.iter().all(|v| v.is_finite()) || !feasible(&pi) {
            continue;
        }
        let v = value(&pi);
        if match &best { Some((bv, _)) => v > *bv, None => true } {
            best = Some((v, pi));
        }
    }
    best
}

/// Reference maximum over the constraint set. The generator term is
/// `case.scale() * best`.
pub fn hamiltonian_oracle(case: &Case, set: &ConstraintSet, coeffs: &CoefficientSet) -> OracleResult {
    let m = coeffs.m();
    let (k, lin) = case.quadratic(coeffs);
    let a: DMatrix<f64> = k * &coeffs.sigma * coeffs.sigma.transpose();
    if !case.has_consumption() {
        // Π reads coupled families at c = 0
        let (g, rhs) = rows(set, m, 0.0);
        let (best, pi) = qp(&a, &lin, &g, &rhs).expect("0 ∈ Π");
        return OracleResult { best, point: pi.iter().copied().collect() };
    }
    let profile = |c: f64| -> (f64, Option<DVector<f64>>) {
        let (g, rhs) = rows(set, m, c);
        match qp(&a, &lin, &g, &rhs) {
            Some((v, pi)) => (v + case.felicity(c), Some(pi)),
            None => (f64::NEG_INFINITY, None),
        }
    };
    // coupling only raises the shadow price of consumption, so c* ≤ c_free
    let (mut lo, mut hi) = (0.0f64, 1.5 * case.free_consumption() + 1.0);
    if let ConstraintSet::Box { c_lower, c_upper, .. } = set {
        lo = lo.max(*c_lower);
        hi = hi.min(*c_upper).max(lo);
    }
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
    let (mut f1, mut f2) = (profile(x1).0, profile(x2).0);
    let (a0, b0) = (lo, hi);
    while hi - lo > 1e-14 * (1.0 + hi) {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = profile(x2).0;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = profile(x1).0;
        }
    }
    let mut best = (f64::NEG_INFINITY, 0.0, None);
    for c in [a0, b0, 0.5 * (lo + hi)] {
        let (v, pi) = profile(c);
        if v > best.0 {
            best = (v, c, pi);
        }
    }
    let (value, c, pi) = best;
    let mut point: Vec<f64> = pi.map_or(vec![f64::NAN; m], |p| p.iter().copied().collect());
    point.push(c);
    OracleResult { best: value, point }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_qp_clamps_one_asset() {
        let a = DMatrix::from_element(1, 1, 2.0);
        let lin = DVector::from_element(1, 4.0);
        let (v, pi) = qp(&a, &lin, &[vec![1.0]], &[1.0]).unwrap();
        assert_eq!(pi[0], 1.0);
        assert_eq!(v, 3.0);
    }

    #[test]
    fn budget_example_is_active() {
        // unconstrained optimum (2, 1) violates π + c ≤ 1
        let c = CoefficientSet::scalar(0.0, 0.04, 0.2, 0.0);
        let case = Case::Power { gamma: 0.5, p: 1.0, lambda: vec![0.0] };
        let r = hamiltonian_oracle(&case, &ConstraintSet::BudgetSimplex, &c);
        assert!((r.point[0] + r.point[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_log_is_closed_form() {
        let c = CoefficientSet::scalar(0.0, 0.04, 0.2, 0.0);
        let case = Case::Log { h: 1.0, eta: vec![0.0] };
        let r = hamiltonian_oracle(&case, &ConstraintSet::Unconstrained, &c);
        // π = b/σ² = 1, c = 1
        assert!((r.point[0] - 1.0).abs() < 1e-12 && (r.point[1] - 1.0).abs() < 1e-7);
        assert!((r.best - (0.02 - 1.0)).abs() < 1e-12);
    }
}
