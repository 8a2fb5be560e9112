//! Backward integrators shared by every system.
//!
//! A system is `ℓ` scalar components with generator `G(stage, i, u, z)`
//! where `u` holds all components at the current point and `z` is the
//! gradient of component `i`. Components evolve as `du/dt = −G` (ODE mode)
//! or `∂_t u + L u + G = 0` (factor mode), `L` being the factor generator.

use super::field::RegimeField;
use super::grid::TimeGrid;
use crate::error::{Error, Result};
use crate::market::{FactorSpec, MarketModel};

/// Where a generator is evaluated.
#[derive(Debug, Clone, Copy)]
pub struct Stage {
    /// Evaluation time.
    pub t: f64,
    /// Time at which piecewise coefficients are read (the step midpoint).
    pub t_coef: f64,
    /// Step index: the stage lies in `[t_k, t_{k+1}]`.
    pub step: usize,
    /// Factor value (0 in ODE mode).
    pub x: f64,
}

/// Envelope a solution must stay inside while integrating.
#[derive(Debug, Clone, Copy)]
pub struct Envelope {
    pub lower: f64,
    pub upper: f64,
}

pub(crate) struct Problem<'a, G> {
    pub model: &'a MarketModel,
    pub grid: TimeGrid,
    pub label: &'a str,
    pub terminal: Vec<f64>,
    pub envelope: Option<Envelope>,
    /// `G(stage, i, u, z)`.
    pub generator: G,
}

/// Step-size rule for the explicit regime coupling.
pub(crate) fn check_step_rule(model: &MarketModel, grid: &TimeGrid) -> Result<()> {
    let q = model.generator.max_exit_rate();
    if q > 0.0 && grid.dt() > 0.1 / q {
        let need = (grid.horizon * q / 0.1).ceil();
        return Err(Error::Instability(format!(
            "Δt = {} exceeds 0.1/max|q_ii| = {}; use N ≥ {need}",
            grid.dt(),
            0.1 / q
        )));
    }
    Ok(())
}

fn check_level(label: &str, t: f64, level: &[Vec<f64>], env: Option<Envelope>) -> Result<()> {
    for (i, row) in level.iter().enumerate() {
        for &v in row {
            if !v.is_finite() {
                return Err(Error::Instability(format!(
                    "{label}: non-finite value in regime {} at t = {t}; refine the grid",
                    i + 1
                )));
            }
            if let Some(e) = env {
                let (lo, hi) = widen(e);
                if v < lo || v > hi {
                    return Err(Error::Instability(format!(
                        "{label}: value {v} left the envelope [{lo}, {hi}] in regime {} at t = {t}; refine the grid",
                        i + 1
                    )));
                }
            }
        }
    }
    Ok(())
}

/// `[lower/2, 2·upper]` for positive envelopes, doubled width otherwise.
fn widen(e: Envelope) -> (f64, f64) {
    let lo = if e.lower > 0.0 { 0.5 * e.lower } else { 2.0 * e.lower };
    let hi = if e.upper > 0.0 { 2.0 * e.upper } else { 0.5 * e.upper };
    (lo, hi)
}

pub(crate) fn integrate<G>(p: Problem<'_, G>) -> Result<RegimeField>
where
    G: Fn(&Stage, usize, &[f64], &[f64]) -> Result<f64>,
{
    check_step_rule(p.model, &p.grid)?;
    match &p.model.factor {
        None => rk4(&p),
        Some(f) => crank_nicolson(&p, f),
    }
}

fn rk4<G>(p: &Problem<'_, G>) -> Result<RegimeField>
where
    G: Fn(&Stage, usize, &[f64], &[f64]) -> Result<f64>,
{
    let ell = p.terminal.len();
    let grid = p.grid;
    let dt = grid.dt();
    let n = p.model.n;
    let zero = vec![0.0; n];
    let mut field = RegimeField::zeros(p.label, grid, ell, vec![], n);
    for i in 0..ell {
        field.values[i][grid.steps] = p.terminal[i];
    }

    let eval = |t: f64, t_coef: f64, step: usize, u: &[f64], out: &mut [f64]| -> Result<()> {
        let st = Stage { t, t_coef, step, x: 0.0 };
        for i in 0..ell {
            out[i] = (p.generator)(&st, i, u, &zero)?;
        }
        Ok(())
    };

    let mut y = p.terminal.clone();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; ell], vec![0.0; ell], vec![0.0; ell], vec![0.0; ell]);
    let mut tmp = vec![0.0; ell];
    for k in (0..grid.steps).rev() {
        let (t0, t1) = (grid.node(k), grid.node(k + 1));
        let tm = 0.5 * (t0 + t1);
        eval(t1, tm, k, &y, &mut k1)?;
        for i in 0..ell {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        eval(tm, tm, k, &tmp, &mut k2)?;
        for i in 0..ell {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        eval(tm, tm, k, &tmp, &mut k3)?;
        for i in 0..ell {
            tmp[i] = y[i] + dt * k3[i];
        }
        eval(t0, tm, k, &tmp, &mut k4)?;
        for i in 0..ell {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            field.values[i][k] = y[i];
        }
        let level: Vec<Vec<f64>> = y.iter().map(|&v| vec![v]).collect();
        check_level(p.label, t0, &level, p.envelope)?;
    }
    Ok(field)
}

/// Tridiagonal representation of the factor generator with reflecting ends.
struct FactorOperator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl FactorOperator {
    fn new(f: &FactorSpec, xs: &[f64]) -> Self {
        let nx = xs.len();
        let dx = f.spacing();
        let a = 0.5 * f.vol.norm_squared() / (dx * dx);
        let mut lower = vec![0.0; nx];
        let mut diag = vec![-2.0 * a; nx];
        let mut upper = vec![0.0; nx];
        for j in 1..nx - 1 {
            let d = f.drift(xs[j]) / (2.0 * dx);
            lower[j] = a - d;
            upper[j] = a + d;
        }
        // ghost node u_{-1} = u_1 (zero slope) removes the drift term
        upper[0] = 2.0 * a;
        lower[nx - 1] = 2.0 * a;
        if nx == 1 {
            diag[0] = 0.0;
            upper[0] = 0.0;
            lower[0] = 0.0;
        }
        Self { lower, diag, upper }
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let nx = u.len();
        for j in 0..nx {
            let mut v = self.diag[j] * u[j];
            if j > 0 {
                v += self.lower[j] * u[j - 1];
            }
            if j + 1 < nx {
                v += self.upper[j] * u[j + 1];
            }
            out[j] = v;
        }
    }

    /// Solves `(I − s·L) u = rhs` by the Thomas algorithm.
    fn solve_shifted(&self, s: f64, rhs: &[f64], u: &mut [f64], scratch: &mut [f64]) {
        let nx = rhs.len();
        let b0 = 1.0 - s * self.diag[0];
        let mut beta = b0;
        u[0] = rhs[0] / beta;
        for j in 1..nx {
            scratch[j] = -s * self.upper[j - 1] / beta;
            beta = (1.0 - s * self.diag[j]) - (-s * self.lower[j]) * scratch[j];
            u[j] = (rhs[j] - (-s * self.lower[j]) * u[j - 1]) / beta;
        }
        for j in (0..nx.saturating_sub(1)).rev() {
            u[j] -= scratch[j + 1] * u[j + 1];
        }
    }
}

fn crank_nicolson<G>(p: &Problem<'_, G>, f: &FactorSpec) -> Result<RegimeField>
where
    G: Fn(&Stage, usize, &[f64], &[f64]) -> Result<f64>,
{
    let ell = p.terminal.len();
    let grid = p.grid;
    let dt = grid.dt();
    let xs = f.grid();
    let nx = xs.len();
    let n = p.model.n;
    let dx = f.spacing();
    let op = FactorOperator::new(f, &xs);
    let mut field = RegimeField::zeros(p.label, grid, ell, xs.clone(), n);

    // cur[i][j]
    let mut cur: Vec<Vec<f64>> = p.terminal.iter().map(|&v| vec![v; nx]).collect();
    let store = |field: &mut RegimeField, k: usize, lev: &[Vec<f64>]| {
        for i in 0..ell {
            field.values[i][k * nx..(k + 1) * nx].copy_from_slice(&lev[i]);
            for j in 0..nx {
                let slope = if j == 0 || j + 1 == nx { 0.0 } else { (lev[i][j + 1] - lev[i][j - 1]) / (2.0 * dx) };
                for d in 0..n {
                    field.gradients[i][(k * nx + j) * n + d] = f.vol[d] * slope;
                }
            }
        }
    };
    store(&mut field, grid.steps, &cur);

    let mut u_node = vec![0.0; ell];
    let mut z = vec![0.0; n];
    let mut gen_level = |t: f64, t_coef: f64, step: usize, lev: &[Vec<f64>], out: &mut [Vec<f64>]| -> Result<()> {
        for j in 0..nx {
            for i in 0..ell {
                u_node[i] = lev[i][j];
            }
            let st = Stage { t, t_coef, step, x: xs[j] };
            for i in 0..ell {
                let slope = if j == 0 || j + 1 == nx { 0.0 } else { (lev[i][j + 1] - lev[i][j - 1]) / (2.0 * dx) };
                for d in 0..n {
                    z[d] = f.vol[d] * slope;
                }
                out[i][j] = (p.generator)(&st, i, &u_node, &z)?;
            }
        }
        Ok(())
    };

    let mut g_old = vec![vec![0.0; nx]; ell];
    let mut g_new = vec![vec![0.0; nx]; ell];
    let mut explicit = vec![vec![0.0; nx]; ell];
    let mut next = vec![vec![0.0; nx]; ell];
    let mut rhs = vec![0.0; nx];
    let mut scratch = vec![0.0; nx];
    for k in (0..grid.steps).rev() {
        let (t0, t1) = (grid.node(k), grid.node(k + 1));
        let tm = 0.5 * (t0 + t1);
        gen_level(t1, tm, k, &cur, &mut g_old)?;
        for i in 0..ell {
            op.apply(&cur[i], &mut explicit[i]);
            for j in 0..nx {
                explicit[i][j] = cur[i][j] + 0.5 * dt * explicit[i][j];
            }
        }
        // predictor with the generator frozen at t_{k+1}
        for i in 0..ell {
            for j in 0..nx {
                rhs[j] = explicit[i][j] + dt * g_old[i][j];
            }
            op.solve_shifted(0.5 * dt, &rhs, &mut next[i], &mut scratch);
        }
        for _ in 0..grid.sweeps {
            gen_level(t0, tm, k, &next, &mut g_new)?;
            for i in 0..ell {
                for j in 0..nx {
                    rhs[j] = explicit[i][j] + 0.5 * dt * (g_old[i][j] + g_new[i][j]);
                }
                op.solve_shifted(0.5 * dt, &rhs, &mut next[i], &mut scratch);
            }
        }
        check_level(p.label, t0, &next, p.envelope)?;
        std::mem::swap(&mut cur, &mut next);
        store(&mut field, k, &cur);
    }
    Ok(field)
}

/// Auxiliary field read by another system's generator.
pub(crate) enum Aux<'a> {
    /// Node values, cubic Hermite in time between nodes with one-sided
    /// slopes `left[i][k]` (at `t_k`) and `right[i][k]` (at `t_{k+1}`) on
    /// step `k`.
    Hermite {
        field: &'a RegimeField,
        left: Vec<Vec<f64>>,
        right: Vec<Vec<f64>>,
    },
    /// Node values only; stages must fall on nodes (factor mode).
    Nodes { field: &'a RegimeField },
}

impl<'a> Aux<'a> {
    /// Builds Hermite slopes from `du/dt = −G(t_coef, i, u)` evaluated with
    /// the coefficients of each step.
    pub fn hermite(field: &'a RegimeField, gen: impl Fn(&Stage, usize, &[f64]) -> Result<f64>) -> Result<Self> {
        let ell = field.ell();
        let grid = field.grid;
        let mut left = vec![vec![0.0; grid.steps]; ell];
        let mut right = vec![vec![0.0; grid.steps]; ell];
        let mut u0 = vec![0.0; ell];
        let mut u1 = vec![0.0; ell];
        for k in 0..grid.steps {
            let (t0, t1) = (grid.node(k), grid.node(k + 1));
            let tm = 0.5 * (t0 + t1);
            for i in 0..ell {
                u0[i] = field.value(i, k, 0);
                u1[i] = field.value(i, k + 1, 0);
            }
            for i in 0..ell {
                left[i][k] = -gen(&Stage { t: t0, t_coef: tm, step: k, x: 0.0 }, i, &u0)?;
                right[i][k] = -gen(&Stage { t: t1, t_coef: tm, step: k, x: 0.0 }, i, &u1)?;
            }
        }
        Ok(Aux::Hermite { field, left, right })
    }

    fn field(&self) -> &RegimeField {
        match self {
            Aux::Hermite { field, .. } | Aux::Nodes { field } => field,
        }
    }

    /// Component `i` (clamped to the field's regime count) at a stage.
    pub fn value(&self, st: &Stage, i: usize) -> f64 {
        let f = self.field();
        let i = i.min(f.ell() - 1);
        let grid = f.grid;
        let k = st.step;
        let (t0, t1) = (grid.node(k), grid.node(k + 1));
        let s = (st.t - t0) / (t1 - t0);
        let j = node_of(f, st.x);
        if s <= 1e-12 {
            return f.value(i, k, j);
        }
        if s >= 1.0 - 1e-12 {
            return f.value(i, k + 1, j);
        }
        match self {
            Aux::Hermite { left, right, .. } => {
                let h = t1 - t0;
                let (y0, y1) = (f.value(i, k, 0), f.value(i, k + 1, 0));
                let (m0, m1) = (left[i][k] * h, right[i][k] * h);
                let s2 = s * s;
                let s3 = s2 * s;
                (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1
            }
            Aux::Nodes { .. } => (1.0 - s) * f.value(i, k, j) + s * f.value(i, k + 1, j),
        }
    }

    /// Gradient of component `i` at a stage (zero between nodes in ODE mode).
    pub fn grad(&self, st: &Stage, i: usize) -> &[f64] {
        let f = self.field();
        let i = i.min(f.ell() - 1);
        let grid = f.grid;
        let k = st.step;
        let s = (st.t - grid.node(k)) / grid.dt();
        let kk = if s >= 0.5 { k + 1 } else { k };
        f.grad(i, kk, node_of(f, st.x))
    }
}

fn node_of(f: &RegimeField, x: f64) -> usize {
    if !f.is_factor_mode() {
        return 0;
    }
    let (lo, hi, w) = f.factor_weights(x);
    if w < 0.5 {
        lo
    } else {
        hi
    }
}
