use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsci_core::bsde::TimeGrid;
use rsci_core::market::RegimeCoefficients;
use rsci_core::sim::{simulate_perturbed, simulate_wealth, Perturbation};
use rsci_core::strategy::{extract_strategy, solve_case, value_at};
use rsci_core::{ConstraintSet, FeedbackStrategy, MarketModel, RegimeGenerator, SimConfig, Utility};

fn merton() -> MarketModel {
    MarketModel::single_regime_scalar(0.02, 0.06, 0.2, 0.0, 1.0)
}

fn setup(model: &MarketModel, u: Utility, set: &ConstraintSet, n: usize) -> (FeedbackStrategy, f64) {
    let grid = TimeGrid::new(model.horizon, n).unwrap();
    let sol = solve_case(model, &u, set, &grid).unwrap();
    let v = value_at(model, &sol, 1.0, 0).unwrap().value;
    (extract_strategy(model, &sol, set).unwrap(), v)
}

#[test]
fn random_feasible_strategies_do_not_beat_the_value() {
    let model = merton();
    let set = ConstraintSet::BudgetSimplex;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for u in [Utility::Power { gamma: 0.5 }, Utility::Power { gamma: -1.0 }, Utility::Log, Utility::Exp { beta: 1.0 }] {
        let (s, v) = setup(&model, u, &set, 50);
        for trial in 0..3 {
            let pi: f64 = rng.random_range(-0.5..0.9);
            let c = rng.random_range(0.05..(1.0 - pi).min(1.0));
            let fixed = Perturbation::Fixed { pi: vec![pi], c };
            let r = simulate_perturbed(&model, &s, &fixed, 1.0, 0, &SimConfig::new(4000, trial, 0.02)).unwrap();
            assert_eq!(r.excluded, 0);
            assert!(r.mean <= v + 3.0 * r.std_error, "{u:?}: {} > {v} + 3·{}", r.mean, r.std_error);
        }
    }
}

#[test]
fn antithetic_pairs_keep_the_mean_and_shrink_the_error() {
    let model = merton();
    let (s, _) = setup(&model, Utility::Power { gamma: 0.5 }, &ConstraintSet::Unconstrained, 50);
    let plain = simulate_wealth(&model, &s, 1.0, 0, &SimConfig::new(8000, 2, 0.02)).unwrap();
    let anti = simulate_wealth(&model, &s, 1.0, 0, &SimConfig { antithetic: true, ..SimConfig::new(8000, 2, 0.02) }).unwrap();
    let se = plain.std_error.hypot(anti.std_error);
    assert!((plain.mean - anti.mean).abs() < 3.0 * se);
    assert!(anti.std_error <= plain.std_error);
}

#[test]
fn halving_dt_is_consistent() {
    let model = merton();
    let (s, _) = setup(&model, Utility::Log, &ConstraintSet::Unconstrained, 50);
    let a = simulate_wealth(&model, &s, 1.0, 0, &SimConfig::new(6000, 8, 0.02)).unwrap();
    let b = simulate_wealth(&model, &s, 1.0, 0, &SimConfig::new(6000, 8, 0.01)).unwrap();
    assert!((a.mean - b.mean).abs() < 3.0 * a.std_error.hypot(b.std_error));
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let model = merton();
    let (s, _) = setup(&model, Utility::Exp { beta: 1.0 }, &ConstraintSet::Unconstrained, 20);
    let cfg = SimConfig::new(500, 99, 0.05);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_wealth(&model, &s, 1.0, 0, &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn regime_switching_value_is_attained() {
    let model = MarketModel {
        generator: RegimeGenerator::symmetric_two_state(2.0),
        m: 1,
        n: 1,
        regimes: vec![RegimeCoefficients::scalar(0.02, 0.08, 0.2, 0.01), RegimeCoefficients::scalar(0.01, 0.03, 0.3, 0.03)],
        factor: None,
        horizon: 1.0,
        delta_floor: 1e-3,
    };
    for u in [Utility::Power { gamma: 0.5 }, Utility::Log] {
        let (s, v) = setup(&model, u, &ConstraintSet::BudgetSimplex, 100);
        let r = simulate_wealth(&model, &s, 1.0, 0, &SimConfig::new(20000, 4, 0.005)).unwrap();
        assert!(r.terminal_wealth.min > 0.0);
        assert!((r.mean - v).abs() < 3.0 * r.std_error + 2e-3 * v.abs(), "{u:?}: {} vs {v} (se {})", r.mean, r.std_error);
    }
}
