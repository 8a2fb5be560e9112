//! Power utility: the multiplicative system `P` and its logarithm `Y = ln P`.

use super::bounds::compute_bounds;
use super::engine::{integrate, Envelope, Problem, Stage};
use super::field::RegimeField;
use super::grid::TimeGrid;
use crate::constraints::{power_hamiltonian, ConstraintMode, ConstraintSet};
use crate::error::{Error, Result};
use crate::market::{CoefficientSet, MarketModel};
use crate::utility::Utility;

/// Checks γ and the standing assumption on the constraint set; returns the
/// witness ε used by the γ < 0 constants.
pub(crate) fn power_preconditions(set: &ConstraintSet, gamma: f64) -> Result<Option<f64>> {
    Utility::Power { gamma }.check()?;
    if gamma > 0.0 {
        set.check_mode(ConstraintMode::PowerPositive)?;
        Ok(set.consumption_witness())
    } else {
        let eps = set
            .consumption_witness()
            .ok_or_else(|| Error::Infeasible(format!("{} admits no positive consumption", set.family_name())))?;
        set.check_mode(ConstraintMode::PositiveConsumption { eps })?;
        Ok(Some(eps))
    }
}

fn solver_error(e: Error) -> Error {
    match e {
        Error::Domain(msg) => Error::Instability(format!("{msg}; refine the grid")),
        other => other,
    }
}

/// Solves for `P` with `P_T = 1`.
pub fn solve_power(model: &MarketModel, gamma: f64, set: &ConstraintSet, grid: &TimeGrid) -> Result<RegimeField> {
    let eps = power_preconditions(set, gamma)?;
    let b = compute_bounds(model, &Utility::Power { gamma }, eps, grid)?;
    let (lower, upper) = b.envelope();
    let q = &model.generator;
    integrate(Problem {
        model,
        grid: *grid,
        label: "P",
        terminal: vec![1.0; model.ell()],
        envelope: Some(Envelope { lower, upper }),
        generator: |st: &Stage, i: usize, u: &[f64], lam: &[f64]| {
            let c = model.coeff_unchecked(st.t_coef, i, st.x);
            let p = u[i];
            let f = power_hamiltonian(set, gamma, p, lam, &c).map_err(solver_error)?.value;
            Ok(f - (c.rho - gamma * c.r) * p + q.couple(i, u))
        },
    })
}

/// The generator term of the logarithmic system,
/// `F(Y, Z) = f(e^Y, e^Y Z) / e^Y`.
pub fn log_transformed_hamiltonian(
    set: &ConstraintSet,
    gamma: f64,
    y: f64,
    z: &[f64],
    coeffs: &CoefficientSet,
) -> Result<f64> {
    let p = y.exp();
    let lam: Vec<f64> = z.iter().map(|v| p * v).collect();
    Ok(power_hamiltonian(set, gamma, p, &lam, coeffs)?.value / p)
}

/// Solves for `Y = ln P` with `Y_T = 0`.
pub fn solve_power_logform(model: &MarketModel, gamma: f64, set: &ConstraintSet, grid: &TimeGrid) -> Result<RegimeField> {
    let eps = power_preconditions(set, gamma)?;
    let b = compute_bounds(model, &Utility::Power { gamma }, eps, grid)?;
    let (lower, upper) = b.envelope();
    let q = &model.generator;
    let ell = model.ell();
    integrate(Problem {
        model,
        grid: *grid,
        label: "Y",
        terminal: vec![0.0; ell],
        envelope: Some(Envelope { lower: lower.ln(), upper: upper.ln() }),
        generator: |st: &Stage, i: usize, u: &[f64], z: &[f64]| {
            let c = model.coeff_unchecked(st.t_coef, i, st.x);
            let f = log_transformed_hamiltonian(set, gamma, u[i], z, &c).map_err(solver_error)?;
            let zz: f64 = z.iter().map(|v| v * v).sum();
            let mut coupling = 0.0;
            for j in 0..ell {
                coupling += q.rate(i, j) * (u[j] - u[i]).exp();
            }
            Ok(f + 0.5 * zz - c.rho + gamma * c.r + coupling)
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{RegimeCoefficients, RegimeGenerator};

    #[test]
    fn closed_form_without_premium() {
        // b = 0 and ρ = γr: P_t = √(1 + T − t)
        let r = 0.03;
        let m = MarketModel::single_regime_scalar(r, r, 0.2, 0.5 * r, 1.0);
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let p = solve_power(&m, 0.5, &ConstraintSet::Unconstrained, &grid).unwrap();
        for k in 0..=200 {
            let t = grid.node(k);
            assert!((p.value(0, k, 0) - (2.0 - t).sqrt()).abs() < 1e-9);
        }
        let y = solve_power_logform(&m, 0.5, &ConstraintSet::Unconstrained, &grid).unwrap();
        assert!((y.value(0, 0, 0) - 0.5 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn identical_regimes_agree() {
        let rc = RegimeCoefficients::scalar(0.02, 0.06, 0.2, 0.01);
        let m = MarketModel {
            generator: RegimeGenerator::symmetric_two_state(2.0),
            m: 1,
            n: 1,
            regimes: vec![rc.clone(), rc],
            factor: None,
            horizon: 1.0,
            delta_floor: 1e-3,
        };
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let p = solve_power(&m, -2.0, &ConstraintSet::BudgetSimplex, &grid).unwrap();
        assert_eq!(p.values[0], p.values[1]);
    }

    #[test]
    fn transformed_term_is_non_increasing_in_y() {
        let c = CoefficientSet::scalar(0.01, 0.07, 0.25, 0.0);
        let set = ConstraintSet::BudgetSimplex;
        let mut prev = f64::INFINITY;
        for k in -20..=20 {
            let y = k as f64 * 0.1;
            let f = log_transformed_hamiltonian(&set, 0.5, y, &[0.3], &c).unwrap();
            assert!(f <= prev + 1e-12);
            prev = f;
        }
    }
}
