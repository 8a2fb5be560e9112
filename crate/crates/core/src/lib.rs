//! Optimal consumption-investment in a regime-switching market.
//!
//! The crate solves the coupled, regime-indexed backward systems that
//! characterise the value function for power, logarithmic and exponential
//! utility under closed convex constraints on (portfolio, consumption), turns
//! their solutions into feedback strategies, and checks optimality by Monte
//! Carlo simulation of the regime chain and the wealth process.
//!
//! Module map:
//! - [`market`]: generator matrix, coefficient curves, optional factor, validation
//! - [`constraints`]: constraint families and the pointwise Hamiltonian maximisers
//! - [`bsde`]: ODE (RK4) and one-factor PDE (Crank–Nicolson) backward solvers,
//!   a-priori bound constants, comparison checks
//! - [`strategy`]: optimal feedback controls and analytic values
//! - [`sim`]: exact chain simulation, wealth Monte Carlo, perturbation tests

// index loops mirror the matrix algebra; `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bsde;
pub mod constraints;
pub mod error;
pub mod market;
pub mod sim;
pub mod strategy;
pub mod utility;

pub use bsde::{RegimeField, TimeGrid};
pub use constraints::{ConstraintSet, HamiltonianResult};
pub use error::{Error, Result};
pub use market::{CoefficientSet, FactorSpec, MarketModel, RegimeGenerator, ValidationReport};
pub use sim::{Perturbation, SimConfig, SimResult};
pub use strategy::{FeedbackStrategy, Solution, ValueReport};
pub use utility::Utility;
