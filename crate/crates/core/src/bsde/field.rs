use std::fmt::Write as _;

use super::grid::TimeGrid;

/// Numerical solution of a coupled backward system: one scalar field per
/// regime on the time grid (times the factor grid in factor mode), with
/// its gradient process. Gradients are identically zero in ODE mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeField {
    pub label: String,
    pub grid: TimeGrid,
    /// Factor nodes; empty in ODE mode.
    pub factor: Vec<f64>,
    /// Length of each gradient vector.
    pub grad_dim: usize,
    /// `values[i][k * nx + j]`.
    pub values: Vec<Vec<f64>>,
    /// `gradients[i][(k * nx + j) * grad_dim + d]`.
    pub gradients: Vec<Vec<f64>>,
}

impl RegimeField {
    pub fn zeros(label: &str, grid: TimeGrid, ell: usize, factor: Vec<f64>, grad_dim: usize) -> Self {
        let nx = factor.len().max(1);
        let len = (grid.steps + 1) * nx;
        Self {
            label: label.to_string(),
            grid,
            factor,
            grad_dim,
            values: vec![vec![0.0; len]; ell],
            gradients: vec![vec![0.0; len * grad_dim]; ell],
        }
    }

    pub fn ell(&self) -> usize {
        self.values.len()
    }

    /// Number of factor nodes (1 in ODE mode).
    pub fn nx(&self) -> usize {
        self.factor.len().max(1)
    }

    pub fn is_factor_mode(&self) -> bool {
        !self.factor.is_empty()
    }

    #[inline]
    pub fn value(&self, i: usize, k: usize, j: usize) -> f64 {
        self.values[i][k * self.nx() + j]
    }

    #[inline]
    pub fn grad(&self, i: usize, k: usize, j: usize) -> &[f64] {
        let d = self.grad_dim;
        let o = (k * self.nx() + j) * d;
        &self.gradients[i][o..o + d]
    }

    /// Time slice `k` of regime `i` across factor nodes.
    pub fn slice(&self, i: usize, k: usize) -> &[f64] {
        let nx = self.nx();
        &self.values[i][k * nx..(k + 1) * nx]
    }

    /// Bracketing factor nodes and weight for linear interpolation at `x`
    /// (clamped to the grid).
    pub fn factor_weights(&self, x: f64) -> (usize, usize, f64) {
        if self.factor.len() < 2 {
            return (0, 0, 0.0);
        }
        let f = &self.factor;
        let last = f.len() - 1;
        if x <= f[0] {
            return (0, 0, 0.0);
        }
        if x >= f[last] {
            return (last, last, 0.0);
        }
        let hi = f.partition_point(|&v| v <= x).min(last);
        let lo = hi - 1;
        let w = (x - f[lo]) / (f[hi] - f[lo]);
        (lo, hi, w)
    }

    /// Value at time node `k`, linearly interpolated in the factor.
    pub fn value_at(&self, i: usize, k: usize, x: f64) -> f64 {
        let (lo, hi, w) = self.factor_weights(x);
        (1.0 - w) * self.value(i, k, lo) + w * self.value(i, k, hi)
    }

    /// Gradient at time node `k`, linearly interpolated in the factor.
    pub fn grad_at(&self, i: usize, k: usize, x: f64, out: &mut [f64]) {
        let (lo, hi, w) = self.factor_weights(x);
        let (a, b) = (self.grad(i, k, lo), self.grad(i, k, hi));
        for d in 0..self.grad_dim {
            out[d] = (1.0 - w) * a[d] + w * b[d];
        }
    }

    /// Value at the left grid node of `t`.
    pub fn value_left(&self, i: usize, t: f64, x: f64) -> f64 {
        self.value_at(i, self.grid.left_index(t), x)
    }

    /// Same field with every value mapped through `f` and zero gradients.
    pub fn map_values(&self, label: &str, f: impl Fn(f64) -> f64) -> RegimeField {
        let mut out = self.clone();
        out.label = label.to_string();
        for v in out.values.iter_mut().flatten() {
            *v = f(*v);
        }
        for g in out.gradients.iter_mut().flatten() {
            *g = 0.0;
        }
        out
    }

    /// Largest node-wise discrepancy with a field on the same grid.
    pub fn max_abs_diff(&self, other: &RegimeField) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "regime counts differ");
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().flatten().chain(self.gradients.iter().flatten()).all(|v| v.is_finite())
    }

    /// Largest spread across factor nodes over all time slices and regimes.
    pub fn factor_spread(&self) -> f64 {
        let mut spread: f64 = 0.0;
        for i in 0..self.ell() {
            for k in 0..=self.grid.steps {
                let s = self.slice(i, k);
                let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                spread = spread.max(hi - lo);
            }
        }
        spread
    }

    /// CSV with header `t,regime[,factor],value,grad_1..grad_n`; regimes are
    /// numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,regime");
        if self.is_factor_mode() {
            s.push_str(",factor");
        }
        s.push_str(",value");
        for d in 0..self.grad_dim {
            let _ = write!(s, ",grad_{}", d + 1);
        }
        s.push('\n');
        for i in 0..self.ell() {
            for k in 0..=self.grid.steps {
                for j in 0..self.nx() {
                    let _ = write!(s, "{:.16e},{}", self.grid.node(k), i + 1);
                    if self.is_factor_mode() {
                        let _ = write!(s, ",{:.16e}", self.factor[j]);
                    }
                    let _ = write!(s, ",{:.16e}", self.value(i, k, j));
                    for g in self.grad(i, k, j) {
                        let _ = write!(s, ",{:.16e}", g);
                    }
                    s.push('\n');
                }
            }
        }
        s
    }
}
