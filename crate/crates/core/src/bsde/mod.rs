//! Backward solvers for the coupled regime-indexed systems.
//!
//! Without a factor every system is a backward ODE in time (gradients
//! vanish) and is integrated by classical RK4 with coefficients frozen at
//! each step midpoint. With a factor the systems become one-dimensional
//! semilinear parabolic equations, solved by Crank–Nicolson in the factor
//! with explicit regime coupling and a predictor–corrector treatment of the
//! nonlinear generator.

mod bounds;
mod comparison;
mod engine;
mod exp;
mod field;
mod grid;
mod log;
mod power;

pub use bounds::{compute_bounds, random_rate_bounds, BoundsReport};
pub use comparison::{check_comparison, ComparisonReport, LinearSystem, COMPARISON_TOL};
pub use engine::{Envelope, Stage};
pub use exp::{
    solve_exp_h_deterministic, solve_exp_h_random, solve_exp_p_form, solve_exp_p_random, solve_exp_y,
    solve_exp_y_random, DeterministicRate, HCurve, RandomRateH,
};
pub use field::RegimeField;
pub use grid::TimeGrid;
pub use log::{solve_log_h, solve_log_p};
pub use power::{log_transformed_hamiltonian, solve_power, solve_power_logform};

