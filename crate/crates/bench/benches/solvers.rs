use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rsci_bench::{merton, three_assets, three_regimes};
use rsci_core::bsde::{solve_power, TimeGrid};
use rsci_core::constraints::power_hamiltonian;
use rsci_core::sim::simulate_wealth;
use rsci_core::strategy::{extract_strategy, solve_case};
use rsci_core::{ConstraintSet, SimConfig, Utility};

fn hamiltonian(c: &mut Criterion) {
    let coeffs = three_assets();
    let lambda = [0.1, -0.2, 0.05];
    c.bench_function("power_hamiltonian/budget-simplex", |b| {
        b.iter(|| power_hamiltonian(&ConstraintSet::BudgetSimplex, 0.5, black_box(1.3), &lambda, &coeffs).unwrap())
    });
    c.bench_function("power_hamiltonian/unconstrained", |b| {
        b.iter(|| power_hamiltonian(&ConstraintSet::Unconstrained, 0.5, black_box(1.3), &lambda, &coeffs).unwrap())
    });
}

fn backward(c: &mut Criterion) {
    let model = three_regimes();
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let mut g = c.benchmark_group("solve_power");
    g.sample_size(10);
    for set in [ConstraintSet::Unconstrained, ConstraintSet::BudgetSimplex] {
        g.bench_function(set.family_name(), |b| b.iter(|| solve_power(&model, 0.5, &set, &grid).unwrap()));
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let model = merton();
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let set = ConstraintSet::Unconstrained;
    let sol = solve_case(&model, &Utility::Power { gamma: 0.5 }, &set, &grid).unwrap();
    let strategy = extract_strategy(&model, &sol, &set).unwrap();
    let cfg = SimConfig::new(2_000, 1, grid.dt());
    let mut g = c.benchmark_group("simulate_wealth");
    g.sample_size(10);
    g.bench_function("merton/2000-paths", |b| b.iter(|| simulate_wealth(&model, &strategy, 1.0, 0, &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, hamiltonian, backward, monte_carlo);
criterion_main!(benches);
