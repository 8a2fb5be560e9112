//! Random inputs that satisfy the standing assumptions by construction.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rsci_core::bsde::LinearSystem;
use rsci_core::market::{RegimeCoefficients, StepCurve};
use rsci_core::{CoefficientSet, ConstraintSet, FactorSpec, MarketModel, RegimeGenerator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelShape {
    pub ell: usize,
    pub m: usize,
    /// One breakpoint per curve inside `(0, T)`.
    pub breakpoints: bool,
    /// Same constant rate in every regime.
    pub common_rate: bool,
    /// Attach a factor; the rate then depends on it unless `common_rate`.
    pub factor: bool,
}

impl ModelShape {
    pub fn odes(ell: usize, m: usize) -> Self {
        Self { ell, m, breakpoints: true, common_rate: false, factor: false }
    }
}

fn sigma<R: Rng>(rng: &mut R, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| if i == j { rng.random_range(0.15..0.4) } else { rng.random_range(-0.05..0.05) })
}

fn curve<T, R: Rng>(rng: &mut R, split: Option<f64>, mut draw: impl FnMut(&mut R) -> T) -> StepCurve<T> {
    match split {
        Some(s) => {
            let a = draw(rng);
            let b = draw(rng);
            StepCurve::from_pieces(vec![(0.0, a), (s, b)]).expect("non-empty")
        }
        None => StepCurve::constant(draw(rng)),
    }
}

/// A random model on `[0, T]`, `T ∈ [0.5, 1.5]`, with `n = m`.
pub fn random_model<R: Rng>(rng: &mut R, shape: ModelShape) -> MarketModel {
    let horizon = rng.random_range(0.5..1.5);
    let ell = shape.ell;
    let m = shape.m;
    let generator = if ell == 1 {
        RegimeGenerator::frozen(1)
    } else {
        let mut q = DMatrix::from_fn(ell, ell, |i, j| if i == j { 0.0 } else { rng.random_range(0.1..2.0) });
        for i in 0..ell {
            let s: f64 = q.row(i).sum();
            q[(i, i)] = -s;
        }
        RegimeGenerator::new(q).expect("valid generator")
    };
    let common = rng.random_range(-0.01..0.05);
    let regimes = (0..ell)
        .map(|_| {
            let split = shape.breakpoints.then(|| horizon * rng.random_range(0.2..0.8));
            let r = if shape.common_rate {
                StepCurve::constant(common)
            } else {
                curve(rng, split, |g| g.random_range(-0.02..0.06))
            };
            let mu = curve(rng, split, |g| DVector::from_fn(m, |_, _| g.random_range(-0.03..0.15)));
            let s = curve(rng, split, |g| sigma(g, m));
            let rho = curve(rng, split, |g| g.random_range(0.0..0.1));
            let (r_slope, mu_slope) = if shape.factor && !shape.common_rate {
                (rng.random_range(0.2..0.8), DVector::from_fn(m, |_, _| rng.random_range(-0.3..0.3)))
            } else {
                (0.0, DVector::zeros(m))
            };
            RegimeCoefficients { r, mu, sigma: s, rho, r_slope, mu_slope }
        })
        .collect();
    let factor = shape.factor.then(|| FactorSpec {
        kappa: rng.random_range(0.5..2.0),
        theta: 0.0,
        vol: DVector::from_fn(m, |_, _| rng.random_range(-0.1..0.1)),
        x0: 0.0,
        x_min: -0.4,
        x_max: 0.4,
        nodes: 41,
    });
    MarketModel { generator, m, n: m, regimes, factor, horizon, delta_floor: 1e-3 }
}

/// A random member of `family` that satisfies the standing assumption of
/// every utility: `(0, 0)` and `(0, ε)` are feasible for some `ε > 0`.
pub fn random_set<R: Rng>(rng: &mut R, family: &str, m: usize) -> ConstraintSet {
    match family {
        "unconstrained" => ConstraintSet::Unconstrained,
        "no-shorting" => ConstraintSet::NoShorting,
        "budget-simplex" => ConstraintSet::BudgetSimplex,
        "box" => ConstraintSet::Box {
            pi_lower: (0..m).map(|_| rng.random_range(-1.0..0.0)).collect(),
            pi_upper: (0..m).map(|_| rng.random_range(0.1..1.5)).collect(),
            c_lower: 0.0,
            c_upper: rng.random_range(0.3..3.0),
        },
        "half-space" => ConstraintSet::HalfSpace {
            a: (0..m).map(|_| rng.random_range(-1.0..1.0)).collect(),
            a0: rng.random_range(0.2..1.0),
            bound: rng.random_range(0.3..2.0),
        },
        other => panic!("unknown family {other}"),
    }
}

/// Two linear systems meeting the comparison hypotheses: shared Metzler
/// coupling, ordered forcing and ordered terminal values.
pub fn random_linear_pair<R: Rng>(rng: &mut R, ell: usize) -> (LinearSystem, LinearSystem) {
    let coupling = DMatrix::from_fn(ell, ell, |i, j| {
        if i == j {
            rng.random_range(-3.0..1.0)
        } else {
            rng.random_range(0.0..2.0)
        }
    });
    let forcing0: Vec<f64> = (0..ell).map(|_| rng.random_range(-1.0..1.0)).collect();
    let forcing1: Vec<f64> = (0..ell).map(|_| rng.random_range(-1.0..1.0)).collect();
    let terminal: Vec<f64> = (0..ell).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lower = LinearSystem { coupling: coupling.clone(), forcing0, forcing1, terminal };
    let mut upper = lower.clone();
    for i in 0..ell {
        // non-negative at t = 0 and t = T = 1 keeps the affine gap ordered
        let g0: f64 = rng.random_range(0.0..0.5);
        let g1: f64 = rng.random_range(0.0..0.5);
        upper.forcing0[i] += g0;
        upper.forcing1[i] += g1 - g0;
        upper.terminal[i] += rng.random_range(0.0..0.5);
    }
    (lower, upper)
}

/// Coefficients at one point, drawn from the ranges used by [`random_model`].
pub fn random_coefficients<R: Rng>(rng: &mut R, m: usize) -> CoefficientSet {
    let r = rng.random_range(-0.02..0.06);
    let mu = DVector::from_fn(m, |_, _| rng.random_range(-0.03..0.15));
    CoefficientSet::new(r, mu, sigma(rng, m), rng.random_range(0.0..0.1))
}
