//! Fixtures shared by the criterion benches.

use nalgebra::{DMatrix, DVector};
use rsci_core::{CoefficientSet, MarketModel, RegimeGenerator};
use rsci_core::market::RegimeCoefficients;

/// Single-regime Merton market.
pub fn merton() -> MarketModel {
    MarketModel::single_regime_scalar(0.02, 0.06, 0.2, 0.0, 1.0)
}

/// Three correlated assets, used for the budget-constrained Hamiltonian.
pub fn three_assets() -> CoefficientSet {
    let sigma = DMatrix::from_row_slice(3, 3, &[0.20, 0.00, 0.00, 0.06, 0.25, 0.00, 0.04, 0.05, 0.30]);
    CoefficientSet::new(0.02, DVector::from_column_slice(&[0.09, 0.07, 0.12]), sigma, 0.01)
}

/// Three regimes, two assets.
pub fn three_regimes() -> MarketModel {
    let generator = RegimeGenerator::from_rows(&[
        vec![-0.6, 0.4, 0.2],
        vec![0.5, -1.0, 0.5],
        vec![0.3, 0.9, -1.2],
    ])
    .expect("square generator");
    let regime = |r: f64, mu: [f64; 2], vol: f64| {
        let sigma = DMatrix::from_row_slice(2, 2, &[vol, 0.0, 0.3 * vol, vol]);
        RegimeCoefficients::constant(r, DVector::from_column_slice(&mu), sigma, 0.01)
    };
    MarketModel {
        generator,
        m: 2,
        n: 2,
        regimes: vec![
            regime(0.03, [0.08, 0.07], 0.18),
            regime(0.02, [0.05, 0.06], 0.25),
            regime(0.01, [0.01, 0.02], 0.35),
        ],
        factor: None,
        horizon: 1.0,
        delta_floor: 1e-3,
    }
}
