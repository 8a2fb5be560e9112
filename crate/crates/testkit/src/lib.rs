//! Shared test support: a reference maximiser for the
//! pointwise Hamiltonians and generators of random validated inputs.

pub mod checks;
pub mod oracle;
pub mod random;

pub use checks::{degeneracy_gaps, oracle_gap, random_case, sandwich_excess, transform_gap, OracleGap};
pub use oracle::{hamiltonian_oracle, objective, Case, OracleResult};
pub use random::{random_coefficients, random_linear_pair, random_model, random_set, ModelShape};

/// Constraint families in the order used by the suites.
pub const FAMILIES: [&str; 5] = ["unconstrained", "no-shorting", "box", "budget-simplex", "half-space"];
