//! Ordering of solutions of linear coupled systems
//! `dY^i = −(f_i(t) + Σ_j C_ij Y^j) dt`, `f_i(t) = f0_i + f1_i·t`.

use nalgebra::DMatrix;

use super::engine::{integrate, Problem, Stage};
use super::grid::TimeGrid;
use crate::error::{Error, Result};
use crate::market::MarketModel;

/// Linear ℓ-dimensional system with affine-in-time forcing.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub coupling: DMatrix<f64>,
    pub forcing0: Vec<f64>,
    pub forcing1: Vec<f64>,
    pub terminal: Vec<f64>,
}

impl LinearSystem {
    pub fn ell(&self) -> usize {
        self.terminal.len()
    }

    fn forcing(&self, i: usize, t: f64) -> f64 {
        self.forcing0[i] + self.forcing1[i] * t
    }

    fn check_shape(&self) -> Result<()> {
        let l = self.ell();
        if self.coupling.nrows() != l || self.coupling.ncols() != l || self.forcing0.len() != l || self.forcing1.len() != l {
            return Err(Error::Config("linear system components have inconsistent sizes".into()));
        }
        Ok(())
    }

    /// Solution on `grid` as `values[k][i]`.
    pub fn solve(&self, grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
        self.check_shape()?;
        let l = self.ell();
        let host = MarketModel::single_regime_scalar(0.0, 0.0, 1.0, 0.0, grid.horizon);
        let field = integrate(Problem {
            model: &host,
            grid: *grid,
            label: "Y",
            terminal: self.terminal.clone(),
            envelope: None,
            generator: |st: &Stage, i: usize, u: &[f64], _: &[f64]| {
                let mut v = self.forcing(i, st.t);
                for j in 0..l {
                    v += self.coupling[(i, j)] * u[j];
                }
                Ok(v)
            },
        })?;
        Ok((0..=grid.steps).map(|k| (0..l).map(|i| field.value(i, k, 0)).collect()).collect())
    }
}

/// Outcome of a comparison run.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// `max (Y^i_t − Ȳ^i_t)` over all nodes and regimes.
    pub max_excess: f64,
    /// `min (Ȳ^i_t − Y^i_t)`.
    pub min_gap: f64,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

/// Ordering slack.
pub const COMPARISON_TOL: f64 = 1e-8;

/// Solves both systems and checks `Y ≤ Ȳ + 1e-8` at every node. The
/// hypotheses (Metzler coupling, shared coupling, ordered forcing and
/// terminal values) are verified first.
pub fn check_comparison(lower: &LinearSystem, upper: &LinearSystem, grid: &TimeGrid) -> Result<ComparisonReport> {
    lower.check_shape()?;
    upper.check_shape()?;
    let l = lower.ell();
    if upper.ell() != l {
        return Err(Error::Precondition("systems have different dimensions".into()));
    }
    for sys in [lower, upper] {
        for i in 0..l {
            for j in 0..l {
                if i != j && sys.coupling[(i, j)] < 0.0 {
                    return Err(Error::Precondition(format!(
                        "generator decreasing in component {} of regime {}",
                        j + 1,
                        i + 1
                    )));
                }
            }
        }
    }
    if lower.coupling != upper.coupling {
        return Err(Error::Precondition("generators are not pointwise ordered: couplings differ".into()));
    }
    for i in 0..l {
        // affine in t: ordered on [0, T] iff ordered at both ends
        let ends = [0.0, grid.horizon];
        if ends.iter().any(|&t| lower.forcing(i, t) > upper.forcing(i, t)) {
            return Err(Error::Precondition(format!("forcing not ordered in regime {}", i + 1)));
        }
        if lower.terminal[i] > upper.terminal[i] {
            return Err(Error::Precondition(format!("terminal values not ordered in regime {}", i + 1)));
        }
    }
    let a = lower.solve(grid)?;
    let b = upper.solve(grid)?;
    let mut max_excess = f64::NEG_INFINITY;
    let mut min_gap = f64::INFINITY;
    for (ra, rb) in a.iter().zip(&b) {
        for (x, y) in ra.iter().zip(rb) {
            max_excess = max_excess.max(x - y);
            min_gap = min_gap.min(y - x);
        }
    }
    if max_excess > COMPARISON_TOL {
        return Err(Error::Instability(format!("ordering violated by {max_excess}")));
    }
    Ok(ComparisonReport { max_excess, min_gap, lower: a, upper: b })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> LinearSystem {
        LinearSystem {
            coupling: DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.5, -0.5]),
            forcing0: vec![0.3, -0.2],
            forcing1: vec![0.0, 0.1],
            terminal: vec![1.0, 0.5],
        }
    }

    #[test]
    fn identical_systems_coincide() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        let r = check_comparison(&base(), &base(), &g).unwrap();
        assert_eq!(r.max_excess, 0.0);
    }

    #[test]
    fn constant_shift_without_coupling() {
        // zero coupling: gap is exactly 0.1·(T − t)
        let mut a = base();
        a.coupling = DMatrix::zeros(2, 2);
        let mut b = a.clone();
        b.forcing0.iter_mut().for_each(|f| *f += 0.1);
        let g = TimeGrid::new(1.0, 100).unwrap();
        let r = check_comparison(&a, &b, &g).unwrap();
        for (k, (ra, rb)) in r.lower.iter().zip(&r.upper).enumerate() {
            let t = g.node(k);
            for (x, y) in ra.iter().zip(rb) {
                assert!((y - x - 0.1 * (1.0 - t)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn negative_off_diagonal_is_rejected() {
        let mut a = base();
        a.coupling[(0, 1)] = -0.1;
        let g = TimeGrid::new(1.0, 10).unwrap();
        assert!(matches!(check_comparison(&a, &a, &g), Err(Error::Precondition(_))));
    }
}
