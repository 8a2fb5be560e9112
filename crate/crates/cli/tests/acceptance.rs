//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsci_core::bsde::{check_comparison, solve_exp_h_deterministic, solve_log_h, solve_power, TimeGrid};
use rsci_core::sim::perturbation_test;
use rsci_core::strategy::{extract_strategy, solve_case, value_at};
use rsci_core::{ConstraintSet, MarketModel, Perturbation, SimConfig, Utility};
use rsci_testkit::{
    degeneracy_gaps, oracle_gap, random_case, random_coefficients, random_linear_pair, random_model, random_set,
    sandwich_excess, transform_gap, ModelShape, FAMILIES,
};

struct Verdict {
    passed: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Verdict);

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn merton(rho: f64) -> MarketModel {
    MarketModel::single_regime_scalar(0.02, 0.06, 0.2, rho, 1.0)
}

fn closed_form_power() -> Verdict {
    // b = 0 and ρ = γr leave P′ = −½/P, so P² = 1 + (T − t)
    let model = MarketModel::single_regime_scalar(0.05, 0.05, 0.2, 0.025, 1.0);
    let grid = TimeGrid::new(1.0, 2000).unwrap();
    let start = Instant::now();
    let p = solve_power(&model, 0.5, &ConstraintSet::Unconstrained, &grid).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = (p.value(0, 0, 0) - 2f64.sqrt()).abs();
    verdict(err <= 1e-6 && secs < 1.0, format!("|P0 - sqrt 2| = {err:.2e}, {secs:.3} s"))
}

fn closed_form_log() -> Verdict {
    let grid = TimeGrid::new(1.0, 2000).unwrap();
    let h2 = solve_log_h(&MarketModel::single_regime_scalar(0.02, 0.06, 0.2, 2.0, 1.0), &grid).unwrap();
    let want = (-2f64).exp() + (1.0 - (-2f64).exp()) / 2.0;
    let err2 = (h2.value(0, 0, 0) - want).abs();
    let h1 = solve_log_h(&MarketModel::single_regime_scalar(0.02, 0.06, 0.2, 1.0, 1.0), &grid).unwrap();
    let err1 = h1.values[0].iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    verdict(err2 <= 1e-8 && err1 <= 1e-12, format!("rho = 2 gap {err2:.2e}, rho = 1 max |h - 1| {err1:.2e}"))
}

fn closed_form_exp() -> Verdict {
    let model = MarketModel::single_regime_scalar(0.0, 0.05, 0.2, 0.0, 1.0);
    let h = solve_exp_h_deterministic(&model, &TimeGrid::new(1.0, 2000).unwrap()).unwrap();
    let err = (h.values[0] - 0.5).abs();
    verdict(err <= 1e-10, format!("|h0 - 0.5| = {err:.2e}"))
}

fn random_family(rng: &mut ChaCha8Rng, m: usize) -> ConstraintSet {
    let f = rng.random_range(0..FAMILIES.len());
    random_set(rng, FAMILIES[f], m)
}

fn sandwiches() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let start = Instant::now();
    let mut worst = Vec::new();
    for case in ["power-positive", "power-negative", "log", "exp-deterministic", "exp-random"] {
        let mut max_excess = f64::NEG_INFINITY;
        for _ in 0..50 {
            let ell = rng.random_range(1..=3);
            let m = rng.random_range(1..=2);
            let (kind, param, shape, set) = match case {
                "power-positive" => ("power", rng.random_range(0.1..0.9), ModelShape::odes(ell, m), random_family(&mut rng, m)),
                "power-negative" => ("power", rng.random_range(-3.0..-0.2), ModelShape::odes(ell, m), random_family(&mut rng, m)),
                "log" => ("log", 0.0, ModelShape::odes(ell, m), ConstraintSet::Unconstrained),
                "exp-deterministic" => (
                    "exp-deterministic",
                    rng.random_range(0.2..3.0),
                    ModelShape { common_rate: true, ..ModelShape::odes(ell, m) },
                    random_family(&mut rng, m),
                ),
                _ => (
                    "exp-random",
                    rng.random_range(0.2..3.0),
                    ModelShape { factor: true, ..ModelShape::odes(ell, 1) },
                    ConstraintSet::Unconstrained,
                ),
            };
            let model = random_model(&mut rng, shape);
            let grid = TimeGrid::new(model.horizon, 100).unwrap();
            match sandwich_excess(kind, param, &model, &set, &grid) {
                Ok(e) => max_excess = max_excess.max(e),
                Err(e) => return verdict(false, format!("{case}: {e}")),
            }
        }
        worst.push((case, max_excess));
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst.iter().all(|(_, e)| *e <= 1e-6) && secs < 60.0;
    let cases: Vec<String> = worst.iter().map(|(c, e)| format!("{c} {e:.1e}")).collect();
    verdict(ok, format!("max excess: {}; {secs:.1} s", cases.join(", ")))
}

fn transforms() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let model = random_model(&mut rng, ModelShape::odes(2, 2));
        let set = random_family(&mut rng, 2);
        let grid = TimeGrid::new(model.horizon, 2000).unwrap();
        worst = worst.max(transform_gap("power", rng.random_range(0.1..0.9), &model, &set, &grid).unwrap());
        worst = worst.max(transform_gap("power", rng.random_range(-3.0..-0.2), &model, &set, &grid).unwrap());
        let model = random_model(&mut rng, ModelShape { common_rate: true, ..ModelShape::odes(2, 2) });
        let grid = TimeGrid::new(model.horizon, 2000).unwrap();
        worst = worst.max(transform_gap("exp-deterministic", rng.random_range(0.2..3.0), &model, &set, &grid).unwrap());
    }
    let mut model = random_model(&mut rng, ModelShape { factor: true, ..ModelShape::odes(2, 1) });
    model.factor.as_mut().unwrap().nodes = 161;
    let grid = TimeGrid::new(model.horizon, 2000).unwrap();
    let random = transform_gap("exp-random", 1.0, &model, &ConstraintSet::Unconstrained, &grid).unwrap();
    verdict(worst.max(random) <= 1e-5, format!("power/exp-deterministic {worst:.1e}, exp-random {random:.1e}"))
}

fn oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(601);
    let mut failures = 0;
    let (mut value_gap, mut objective_gap): (f64, f64) = (0.0, 0.0);
    let mut total = 0;
    for kind in ["power", "power-negative", "log", "exp"] {
        for family in FAMILIES {
            for _ in 0..200 {
                let m = rng.random_range(1..=3);
                let coeffs = random_coefficients(&mut rng, m);
                let set = random_set(&mut rng, family, m);
                let case = random_case(&mut rng, kind, coeffs.n());
                total += 1;
                match oracle_gap(&case, &set, &coeffs) {
                    Ok(g) => {
                        value_gap = value_gap.max(g.value_gap);
                        objective_gap = objective_gap.max(g.objective_gap);
                        failures += usize::from(!g.passes());
                    }
                    Err(_) => failures += 1,
                }
            }
        }
    }
    verdict(
        failures == 0,
        format!("{total} instances, {failures} failures, max value gap {value_gap:.1e}, max objective gap {objective_gap:.1e}"),
    )
}

fn monte_carlo() -> Verdict {
    let model = merton(0.0);
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let set = ConstraintSet::Unconstrained;
    // same seed as the CLI default
    let cfg = SimConfig::new(100_000, rsci_cli::DEFAULT_SEED, 1e-3);
    let mut ok = true;
    let mut parts = Vec::new();
    for u in [Utility::Power { gamma: 0.5 }, Utility::Log, Utility::Exp { beta: 1.0 }] {
        let start = Instant::now();
        let sol = solve_case(&model, &u, &set, &grid).unwrap();
        let v = value_at(&model, &sol, 1.0, 0).unwrap().value;
        let s = extract_strategy(&model, &sol, &set).unwrap();
        let (_, c0) = s.control(0.0, 0, 1.0, 0.0);
        let perts = [Perturbation::ScalePi { factor: 0.8 }, Perturbation::ConstantConsumption { c: 0.5 * c0 }];
        let rep = perturbation_test(&model, &s, &perts, 1.0, 0, &cfg).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let z = (rep.candidate.mean - v) / rep.candidate.std_error;
        let worse = rep.outcomes.iter().all(|o| o.strictly_worse);
        ok &= z.abs() <= 3.0 && worse && secs < 120.0;
        parts.push(format!("{} z = {z:.2}, perturbations worse: {worse}, {secs:.0} s", u.name()));
    }
    verdict(ok, parts.join("; "))
}

fn monotonicity() -> Verdict {
    let model = merton(0.0);
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let chain = [
        ConstraintSet::Box { pi_lower: vec![0.0], pi_upper: vec![0.4], c_lower: 0.0, c_upper: 0.5 },
        ConstraintSet::BudgetSimplex,
        ConstraintSet::Unconstrained,
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for u in [Utility::Power { gamma: 0.5 }, Utility::Power { gamma: -1.0 }, Utility::Exp { beta: 1.0 }] {
        let mut values = Vec::new();
        let mut starts = Vec::new();
        for set in &chain {
            let sol = solve_case(&model, &u, set, &grid).unwrap();
            values.push(value_at(&model, &sol, 1.0, 0).unwrap().value);
            starts.push(extract_strategy(&model, &sol, set).unwrap().control(0.0, 0, 1.0, 0.0));
        }
        for k in 0..2 {
            let (small, big) = (values[k], values[k + 1]);
            let (pi, c) = &starts[k + 1];
            let reachable = match u {
                Utility::Exp { .. } => chain[k].contains_pi(pi, 1e-9),
                _ => chain[k].contains(pi, *c, 1e-9),
            };
            let tol = 1e-10 * (1.0 + big.abs());
            ok &= small <= big + tol;
            if !reachable {
                ok &= small < big - tol;
            }
        }
        parts.push(format!("{:?}: {:.6} <= {:.6} <= {:.6}", u, values[0], values[1], values[2]));
    }
    verdict(ok, parts.join("; "))
}

fn comparison() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(901);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let ell = rng.random_range(1..=4);
        let (lower, upper) = random_linear_pair(&mut rng, ell);
        match check_comparison(&lower, &upper, &TimeGrid::new(1.0, 200).unwrap()) {
            Ok(r) => worst = worst.max(r.max_excess),
            Err(e) => return verdict(false, e.to_string()),
        }
    }
    verdict(worst <= 1e-8, format!("max (Y - Ybar) = {worst:.2e}"))
}

fn degeneracy() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let model = random_model(&mut rng, ModelShape { common_rate: true, ..ModelShape::odes(2, 1) });
    let grid = TimeGrid::new(model.horizon, 2000).unwrap();
    let (mut diff, mut spread): (f64, f64) = (0.0, 0.0);
    for u in [Utility::Power { gamma: 0.5 }, Utility::Power { gamma: -1.0 }, Utility::Log, Utility::Exp { beta: 1.0 }] {
        let (d, s) = degeneracy_gaps(&u, &model, &ConstraintSet::BudgetSimplex, &grid).unwrap();
        diff = diff.max(d);
        spread = spread.max(s);
    }
    verdict(diff <= 1e-6 && spread <= 1e-8, format!("max diff {diff:.1e}, max spread {spread:.1e}"))
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn determinism() -> Verdict {
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_rsci"))
            .args(["verify", "--utility", "power", "--gamma", "0.5", "--grid-n", "500", "--paths", "20000"])
            .args(["--seed", "11", "--model"])
            .arg(configs.join("two_regime_identical.json"))
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        (status.status.code(), files(&out))
    };
    let (code_a, a) = run("a");
    let (code_b, b) = run("b");
    let same = a == b && !a.is_empty();
    verdict(
        same && code_a == Some(0) && code_b == Some(0),
        format!("{} files, identical: {same}, exit codes {code_a:?}/{code_b:?}", a.len()),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("closed-form power value", closed_form_power),
        ("closed-form log h", closed_form_log),
        ("closed-form exponential h", closed_form_exp),
        ("bound sandwiches", sandwiches),
        ("transform consistency", transforms),
        ("Hamiltonian oracle equivalence", oracle),
        ("Monte Carlo verification", monte_carlo),
        ("constraint monotonicity", monotonicity),
        ("comparison ordering", comparison),
        ("factor-mode degeneracy", degeneracy),
        ("determinism of verify", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failed += usize::from(!v.passed);
        println!("criterion {:>2} {} {name}: {}", k + 1, if v.passed { "PASS" } else { "FAIL" }, v.detail);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
