//! Logarithmic utility: the linear system `h` and the system `P` driven by it.

use super::engine::{integrate, Aux, Problem, Stage};
use super::field::RegimeField;
use super::grid::TimeGrid;
use crate::constraints::{log_hamiltonian, ConstraintMode, ConstraintSet};
use crate::error::{Error, Result};
use crate::market::MarketModel;

fn h_generator(model: &MarketModel) -> impl Fn(&Stage, usize, &[f64]) -> Result<f64> + '_ {
    move |st: &Stage, i: usize, u: &[f64]| {
        let rho = model.coeff_unchecked(st.t_coef, i, st.x).rho;
        Ok(1.0 - rho * u[i] + model.generator.couple(i, u))
    }
}

/// Solves for `h` with `h_T = 1`.
pub fn solve_log_h(model: &MarketModel, grid: &TimeGrid) -> Result<RegimeField> {
    let g = h_generator(model);
    let h = integrate(Problem {
        model,
        grid: *grid,
        label: "h",
        terminal: vec![1.0; model.ell()],
        envelope: None,
        generator: |st: &Stage, i: usize, u: &[f64], _: &[f64]| g(st, i, u),
    })?;
    if h.min_value() <= 0.0 {
        return Err(Error::Instability(format!("h reached {} ≤ 0; refine the grid", h.min_value())));
    }
    Ok(h)
}

/// Solves for `P` with `P_T = 0`, reading `h` (and `η`) from `h_field`.
pub fn solve_log_p(model: &MarketModel, set: &ConstraintSet, h_field: &RegimeField, grid: &TimeGrid) -> Result<RegimeField> {
    let eps = set
        .consumption_witness()
        .ok_or_else(|| Error::Infeasible(format!("{} admits no positive consumption", set.family_name())))?;
    set.check_mode(ConstraintMode::PositiveConsumption { eps })?;
    if h_field.grid != *grid || h_field.ell() != model.ell() {
        return Err(Error::Config("h field was solved on a different grid or model".into()));
    }
    let aux = if h_field.is_factor_mode() {
        Aux::Nodes { field: h_field }
    } else {
        Aux::hermite(h_field, h_generator(model))?
    };
    let q = &model.generator;
    integrate(Problem {
        model,
        grid: *grid,
        label: "P",
        terminal: vec![0.0; model.ell()],
        envelope: None,
        generator: |st: &Stage, i: usize, u: &[f64], _: &[f64]| {
            let c = model.coeff_unchecked(st.t_coef, i, st.x);
            let h = aux.value(st, i);
            let eta = aux.grad(st, i);
            let f = log_hamiltonian(set, h, eta, &c)?.value;
            Ok(f - c.rho * u[i] + c.r * h + q.couple(i, u))
        },
    })
}
