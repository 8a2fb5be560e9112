use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsci_core::bsde::TimeGrid;
use rsci_core::constraints::power_hamiltonian;
use rsci_core::strategy::{extract_strategy, solve_case, value_at};
use rsci_core::{ConstraintSet, MarketModel, Utility};
use rsci_testkit::{random_coefficients, random_model, random_set, ModelShape, FAMILIES};

fn nested_chain() -> [ConstraintSet; 3] {
    [
        ConstraintSet::Box { pi_lower: vec![0.0], pi_upper: vec![0.4], c_lower: 0.0, c_upper: 0.5 },
        ConstraintSet::BudgetSimplex,
        ConstraintSet::Unconstrained,
    ]
}

const UTILITIES: [Utility; 4] =
    [Utility::Power { gamma: 0.5 }, Utility::Power { gamma: -1.0 }, Utility::Log, Utility::Exp { beta: 1.0 }];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // coupled families tie π to c, which does scale, so only separable ones
    #[test]
    fn power_portfolio_is_scale_free(seed in any::<u64>(), family in 0usize..3, lambda in 0.1..10.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = random_coefficients(&mut rng, 2);
        let set = random_set(&mut rng, FAMILIES[family], 2);
        let gamma: f64 = rng.random_range(-2.0..0.9);
        prop_assume!(gamma.abs() > 0.05);
        let p = rng.random_range(0.1..10.0);
        let grad = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let scaled = [lambda * grad[0], lambda * grad[1]];
        let (a, b) = (
            power_hamiltonian(&set, gamma, p, &grad, &coeffs).unwrap(),
            power_hamiltonian(&set, gamma, lambda * p, &scaled, &coeffs).unwrap(),
        );
        for (x, y) in a.pi.iter().zip(&b.pi) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()), "{:?} vs {:?}", a.pi, b.pi);
        }
    }
}

#[test]
fn strategies_are_feasible_everywhere() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for u in UTILITIES {
        for family in FAMILIES {
            let model = random_model(&mut rng, ModelShape::odes(2, 2));
            let model = if matches!(u, Utility::Exp { .. }) {
                random_model(&mut rng, ModelShape { common_rate: true, ..ModelShape::odes(2, 2) })
            } else {
                model
            };
            let set = random_set(&mut rng, family, 2);
            let grid = TimeGrid::new(model.horizon, 100).unwrap();
            let sol = solve_case(&model, &u, &set, &grid).unwrap();
            let s = extract_strategy(&model, &sol, &set).unwrap();
            for _ in 0..1000 {
                let t = rng.random_range(0.0..model.horizon);
                let i = rng.random_range(0..model.ell());
                let x = rng.random_range(0.01..10.0);
                let (pi, c) = s.control(t, i, x, 0.0);
                let ok = if s.in_amounts() { set.contains_pi(&pi, 1e-9) } else { set.contains(&pi, c, 1e-9) };
                assert!(ok, "{u:?} {family}: π = {pi:?}, c = {c}");
                if !matches!(u, Utility::Power { gamma } if gamma > 0.0) && !s.in_amounts() {
                    assert!(c > 0.0);
                }
            }
        }
    }
}

#[test]
fn value_increases_with_wealth() {
    let model = MarketModel::single_regime_scalar(0.02, 0.06, 0.2, 0.01, 1.0);
    let grid = TimeGrid::new(1.0, 100).unwrap();
    for u in UTILITIES {
        let sol = solve_case(&model, &u, &ConstraintSet::BudgetSimplex, &grid).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 1..50 {
            let v = value_at(&model, &sol, 0.1 * k as f64, 0).unwrap().value;
            assert!(v > prev, "{u:?} at x = {}", 0.1 * k as f64);
            prev = v;
        }
    }
}

#[test]
fn value_grows_along_nested_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..4 {
        let model = random_model(&mut rng, ModelShape { common_rate: true, ..ModelShape::odes(2, 1) });
        let grid = TimeGrid::new(model.horizon, 100).unwrap();
        for u in UTILITIES {
            let v: Vec<f64> = nested_chain()
                .iter()
                .map(|set| {
                    let sol = solve_case(&model, &u, set, &grid).unwrap();
                    value_at(&model, &sol, 1.0, 0).unwrap().value
                })
                .collect();
            assert!(v[0] <= v[1] + 1e-10 && v[1] <= v[2] + 1e-10, "{u:?}: {v:?}");
        }
    }
}
