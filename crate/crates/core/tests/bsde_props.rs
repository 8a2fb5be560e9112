use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsci_core::bsde::{check_comparison, TimeGrid, COMPARISON_TOL};
use rsci_core::strategy::solve_case;
use rsci_core::{ConstraintSet, Utility};
use rsci_testkit::{
    degeneracy_gaps, random_linear_pair, random_model, random_set, sandwich_excess, transform_gap, ModelShape, FAMILIES,
};

const SLACK: f64 = 1e-6;

fn random_family(rng: &mut ChaCha8Rng, m: usize) -> ConstraintSet {
    let f = rng.random_range(0..FAMILIES.len());
    random_set(rng, FAMILIES[f], m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn power_solutions_stay_in_their_envelope(seed in any::<u64>(), gamma in prop_oneof![-3.0..-0.2f64, 0.1..0.9f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, ModelShape::odes(2, 2));
        let set = random_family(&mut rng, 2);
        let grid = TimeGrid::new(model.horizon, 100).unwrap();
        let excess = sandwich_excess("power", gamma, &model, &set, &grid).unwrap();
        prop_assert!(excess <= SLACK, "{excess}");
    }

    #[test]
    fn log_h_stays_above_its_floor(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, ModelShape::odes(3, 1));
        let grid = TimeGrid::new(model.horizon, 100).unwrap();
        let excess = sandwich_excess("log", 0.0, &model, &ConstraintSet::Unconstrained, &grid).unwrap();
        prop_assert!(excess <= SLACK, "{excess}");
    }

    #[test]
    fn exp_solutions_stay_in_their_envelope(seed in any::<u64>(), beta in 0.2..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, ModelShape { common_rate: true, ..ModelShape::odes(2, 2) });
        let set = random_family(&mut rng, 2);
        let grid = TimeGrid::new(model.horizon, 100).unwrap();
        let excess = sandwich_excess("exp-deterministic", beta, &model, &set, &grid).unwrap();
        prop_assert!(excess <= SLACK, "{excess}");
    }

    #[test]
    fn power_log_form_matches(seed in any::<u64>(), gamma in prop_oneof![-3.0..-0.2f64, 0.1..0.9f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, ModelShape::odes(2, 1));
        let set = random_family(&mut rng, 1);
        let grid = TimeGrid::new(model.horizon, 200).unwrap();
        let gap = transform_gap("power", gamma, &model, &set, &grid).unwrap();
        prop_assert!(gap <= 1e-5, "{gap}");
    }

    #[test]
    fn exp_y_form_matches(seed in any::<u64>(), beta in 0.2..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, ModelShape { common_rate: true, ..ModelShape::odes(2, 1) });
        let set = random_family(&mut rng, 1);
        let grid = TimeGrid::new(model.horizon, 200).unwrap();
        let gap = transform_gap("exp-deterministic", beta, &model, &set, &grid).unwrap();
        prop_assert!(gap <= 1e-5, "{gap}");
    }

    #[test]
    fn comparison_ordering_holds(seed in any::<u64>(), ell in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lower, upper) = random_linear_pair(&mut rng, ell);
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let rep = check_comparison(&lower, &upper, &grid).unwrap();
        prop_assert!(rep.max_excess <= COMPARISON_TOL);
    }
}

#[test]
fn random_rate_envelope_and_transforms() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut model = random_model(&mut rng, ModelShape { factor: true, ..ModelShape::odes(2, 1) });
    let grid = TimeGrid::new(model.horizon, 200).unwrap();
    let set = ConstraintSet::Unconstrained;
    assert!(sandwich_excess("exp-random", 1.0, &model, &set, &grid).unwrap() <= SLACK);
    model.factor.as_mut().unwrap().nodes = 161;
    let gap = transform_gap("exp-random", 1.0, &model, &set, &grid).unwrap();
    assert!(gap <= 1e-5, "{gap}");
}

#[test]
fn ode_mode_converges_at_fourth_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = random_model(&mut rng, ModelShape { breakpoints: false, common_rate: true, ..ModelShape::odes(2, 1) });
    for u in [Utility::Power { gamma: 0.5 }, Utility::Power { gamma: -1.0 }, Utility::Log, Utility::Exp { beta: 1.0 }] {
        let v = |n: usize| {
            let grid = TimeGrid::new(model.horizon, n).unwrap();
            solve_case(&model, &u, &ConstraintSet::Unconstrained, &grid).unwrap().main().value(0, 0, 0)
        };
        let reference = v(2048);
        let errs: Vec<f64> = [16, 32, 64].iter().map(|&n| (v(n) - reference).abs()).collect();
        assert!(errs[0] / errs[1] >= 4.0 && errs[1] / errs[2] >= 4.0, "{u:?}: {errs:?}");
    }
}

#[test]
fn zero_sensitivity_factor_reproduces_ode_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = random_model(&mut rng, ModelShape { common_rate: true, ..ModelShape::odes(2, 1) });
    let grid = TimeGrid::new(model.horizon, 1000).unwrap();
    for u in [Utility::Power { gamma: 0.5 }, Utility::Power { gamma: -1.0 }, Utility::Log, Utility::Exp { beta: 1.0 }] {
        let (diff, spread) = degeneracy_gaps(&u, &model, &ConstraintSet::BudgetSimplex, &grid).unwrap();
        assert!(diff <= 1e-6 && spread <= 1e-8, "{u:?}: {diff} {spread}");
    }
}
