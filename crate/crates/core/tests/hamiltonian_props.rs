use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsci_core::bsde::log_transformed_hamiltonian;
use rsci_core::constraints::{exp_hamiltonian, log_hamiltonian, power_hamiltonian};
use rsci_core::ConstraintSet;
use rsci_testkit::{oracle_gap, random_case, random_coefficients, random_set, Case, FAMILIES};

const KINDS: [&str; 4] = ["power", "power-negative", "log", "exp"];

fn value(case: &Case, set: &ConstraintSet, c: &rsci_core::CoefficientSet) -> f64 {
    match case {
        Case::Power { gamma, p, lambda } => power_hamiltonian(set, *gamma, *p, lambda, c).unwrap().value,
        Case::Log { h, eta } => log_hamiltonian(set, *h, eta, c).unwrap().value,
        Case::Exp { beta, h, z } => exp_hamiltonian(set, *beta, *h, z, c).unwrap().value,
    }
}

/// Box ⊂ simplex ⊂ unconstrained for one asset.
fn nested() -> [ConstraintSet; 3] {
    [
        ConstraintSet::Box { pi_lower: vec![0.0], pi_upper: vec![0.4], c_lower: 0.0, c_upper: 0.5 },
        ConstraintSet::BudgetSimplex,
        ConstraintSet::Unconstrained,
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn agrees_with_lattice_oracle(seed in any::<u64>(), kind in 0usize..4, family in 0usize..5, m in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = random_coefficients(&mut rng, m);
        let set = random_set(&mut rng, FAMILIES[family], m);
        let case = random_case(&mut rng, KINDS[kind], m);
        let gap = oracle_gap(&case, &set, &coeffs).unwrap();
        prop_assert!(gap.passes(), "{gap:?} for {case:?} on {set:?}");
    }

    #[test]
    fn value_grows_with_the_set(seed in any::<u64>(), kind in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = random_coefficients(&mut rng, 1);
        let case = random_case(&mut rng, KINDS[kind], 1);
        // the reported term is γ·sup, so order flips for γ < 0
        let sign = if case.scale() < 0.0 { -1.0 } else { 1.0 };
        let v: Vec<f64> = nested().iter().map(|s| sign * value(&case, s, &coeffs)).collect();
        prop_assert!(v[0] <= v[1] + 1e-9 * (1.0 + v[1].abs()), "{v:?}");
        prop_assert!(v[1] <= v[2] + 1e-9 * (1.0 + v[2].abs()), "{v:?}");
    }

    #[test]
    fn sign_properties(seed in any::<u64>(), family in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = random_coefficients(&mut rng, 2);
        let set = random_set(&mut rng, FAMILIES[family], 2);
        let power = random_case(&mut rng, "power", 2);
        prop_assert!(value(&power, &set, &coeffs) >= 0.0);
        let exp = random_case(&mut rng, "exp", 2);
        prop_assert!(value(&exp, &set, &coeffs) >= 0.0);
    }

    #[test]
    fn transformed_term_is_non_increasing(seed in any::<u64>(), family in 0usize..5, gamma in prop_oneof![-2.0..-0.2f64, 0.1..0.9f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = random_coefficients(&mut rng, 1);
        let set = random_set(&mut rng, FAMILIES[family], 1);
        let z = [rng.random_range(-2.0..2.0)];
        let mut prev = f64::INFINITY;
        for k in -15..=15 {
            let f = log_transformed_hamiltonian(&set, gamma, 0.15 * k as f64, &z, &coeffs).unwrap();
            prop_assert!(f <= prev + 1e-9 * (1.0 + f.abs()), "{f} > {prev}");
            prev = f;
        }
    }
}
