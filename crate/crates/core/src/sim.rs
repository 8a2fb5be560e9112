//! Monte Carlo of the regime chain, the factor and the wealth process under
//! a feedback strategy.
//!
//! Every path draws its randomness from a ChaCha stream keyed by
//! `(seed, path index)`: the whole regime path first, then the Brownian
//! increments. All arms of a run replay the same draws, so comparisons use
//! common random numbers and results do not depend on the worker count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{CoefficientTable, MarketModel, RegimeGenerator};
use crate::strategy::{AffineControl, FeedbackStrategy};
use crate::utility::Utility;

const Z99: f64 = 2.575_829_303_548_900_4;
const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub dt: f64,
    /// Pair each path with its reflection `W → −W`; samples are pair means.
    pub antithetic: bool,
}

impl SimConfig {
    pub fn new(n_paths: usize, seed: u64, dt: f64) -> Self {
        Self { n_paths, seed, dt, antithetic: false }
    }

    /// Number of steps of size `dt` per strategy step.
    fn substeps(&self, strategy_dt: f64) -> Result<usize> {
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        if self.antithetic && self.n_paths < 2 {
            return Err(Error::Config("antithetic sampling needs at least 2 paths".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        let ratio = strategy_dt / self.dt;
        let r = ratio.round();
        if r < 1.0 || (ratio - r).abs() > 1e-9 * ratio {
            return Err(Error::Config(format!(
                "dt = {} does not divide the strategy grid step {strategy_dt}",
                self.dt
            )));
        }
        Ok(r as usize)
    }
}

/// Piecewise-constant regime path on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimePath {
    pub initial: usize,
    /// `(jump time, new state)` in increasing time order.
    pub jumps: Vec<(f64, usize)>,
}

impl RegimePath {
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.jumps.partition_point(|&(s, _)| s <= t);
        if k == 0 {
            self.initial
        } else {
            self.jumps[k - 1].1
        }
    }

    /// Time spent in `state` on `[0, horizon]`.
    pub fn occupation(&self, state: usize, horizon: f64) -> f64 {
        let mut total = 0.0;
        let mut from = 0.0;
        let mut cur = self.initial;
        for &(t, next) in &self.jumps {
            if cur == state {
                total += t - from;
            }
            from = t;
            cur = next;
        }
        if cur == state {
            total += horizon - from;
        }
        total
    }
}

/// Exact simulation by exponential holding times.
pub fn simulate_chain<R: Rng + ?Sized>(q: &RegimeGenerator, i0: usize, horizon: f64, rng: &mut R) -> RegimePath {
    let mut jumps = Vec::new();
    let mut t = 0.0;
    let mut cur = i0;
    loop {
        let exit = -q.rate(cur, cur);
        if exit <= 0.0 {
            break;
        }
        let hold: f64 = Exp::new(exit).expect("positive rate").sample(rng);
        t += hold;
        if t >= horizon {
            break;
        }
        let u: f64 = rng.random::<f64>() * exit;
        let mut acc = 0.0;
        let mut next = cur;
        for j in 0..q.ell() {
            if j == cur {
                continue;
            }
            acc += q.rate(cur, j);
            next = j;
            if u < acc {
                break;
            }
        }
        cur = next;
        jumps.push((t, cur));
    }
    RegimePath { initial: i0, jumps }
}

/// A feasible modification of the candidate strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Perturbation {
    Identity,
    ScalePi { factor: f64 },
    ConstantConsumption { c: f64 },
    /// Ignores the candidate entirely.
    Fixed { pi: Vec<f64>, c: f64 },
}

impl Perturbation {
    fn apply(&self, pi: &mut [f64], c: &mut f64) {
        match self {
            Perturbation::Identity => {}
            Perturbation::ScalePi { factor } => pi.iter_mut().for_each(|p| *p *= factor),
            Perturbation::ConstantConsumption { c: cbar } => *c = *cbar,
            Perturbation::Fixed { pi: fixed, c: cbar } => {
                pi.copy_from_slice(fixed);
                *c = *cbar;
            }
        }
    }

    /// Rejects perturbations that leave the constraint set at any cached
    /// node, or that make consumption utility infinite.
    pub fn check(&self, strategy: &FeedbackStrategy) -> Result<()> {
        if let Perturbation::Fixed { pi, .. } = self {
            if pi.len() != strategy.m {
                return Err(Error::Config(format!("fixed portfolio has {} entries, expected {}", pi.len(), strategy.m)));
            }
        }
        if *self == Perturbation::Identity {
            return Ok(());
        }
        let needs_positive_c = matches!(strategy.utility, Utility::Log)
            || matches!(strategy.utility, Utility::Power { gamma } if gamma < 0.0);
        let mut bad: Option<String> = None;
        strategy.for_each_node(|a: &AffineControl| {
            if bad.is_some() {
                return;
            }
            let mut pi = a.pi0.clone();
            let mut c = a.c0;
            self.apply(&mut pi, &mut c);
            let ok = if strategy.in_amounts() {
                let wealth_dependent = a.pi1.iter().any(|&v| v != 0.0);
                (wealth_dependent && strategy.set.is_unconstrained())
                    || (!wealth_dependent && strategy.set.contains_pi(&pi, FEASIBILITY_TOL))
            } else {
                strategy.set.contains(&pi, c, FEASIBILITY_TOL) && (!needs_positive_c || c > 0.0)
            };
            if !ok {
                bad = Some(format!("perturbation {self:?} leaves the constraint set at π = {pi:?}, c = {c}"));
            }
        });
        match bad {
            Some(msg) => Err(Error::Infeasible(msg)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthSummary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Ensemble statistics of realised utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub n_paths: usize,
    pub antithetic: bool,
    /// Independent samples behind `mean` (pairs when antithetic).
    pub samples: usize,
    /// Samples dropped because the realised utility was not finite.
    pub excluded: usize,
    pub mean: f64,
    pub std_error: f64,
    pub ci99: [f64; 2],
    pub terminal_wealth: WealthSummary,
    /// Paths whose wealth touched zero or below (amount mode only).
    pub nonpositive_wealth: usize,
    pub max_abs_consumption: f64,
    /// Sample maximum of `exp(−β h_t X_t)`; a heuristic only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_exp_functional: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationOutcome {
    pub perturbation: Perturbation,
    pub result: SimResult,
    /// Mean of `perturbed − candidate` over paired samples.
    pub diff_mean: f64,
    pub diff_se: f64,
    /// `diff_mean ≤ 3·diff_se`.
    pub not_better: bool,
    /// `diff_mean < −3·diff_se`.
    pub strictly_worse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub candidate: SimResult,
    pub outcomes: Vec<PerturbationOutcome>,
}

impl PerturbationReport {
    pub fn all_not_better(&self) -> bool {
        self.outcomes.iter().all(|o| o.not_better)
    }
}

struct PathNoise {
    /// `(start, length, regime, strategy node)` per piece.
    pieces: Vec<(f64, f64, usize, usize)>,
    dw: Vec<f64>,
}

/// Per arm: realised utility (if finite), the path, and its antithetic twin.
type ArmSample = (Option<f64>, ArmPath, Option<ArmPath>);

#[derive(Clone, Copy)]
struct ArmPath {
    value: f64,
    wealth: f64,
    max_abs_c: f64,
    nonpositive: bool,
    functional: f64,
}

struct Runner<'a> {
    model: &'a MarketModel,
    table: CoefficientTable,
    strategy: &'a FeedbackStrategy,
    utility: Utility,
    x0: f64,
    i0: usize,
    cfg: SimConfig,
    ratio: usize,
}

impl Runner<'_> {
    fn noise(&self, path: u64) -> PathNoise {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(path);
        let horizon = self.model.horizon;
        let chain = simulate_chain(&self.model.generator, self.i0, horizon, &mut rng);
        let steps = self.strategy.grid.steps * self.ratio;
        let mut pieces = Vec::with_capacity(steps + chain.jumps.len());
        let mut jumps = chain.jumps.iter().peekable();
        let mut regime = self.i0;
        for s in 0..steps {
            let t1 = horizon * (s + 1) as f64 / steps as f64;
            let mut from = horizon * s as f64 / steps as f64;
            let node = s / self.ratio;
            while let Some(&&(tj, next)) = jumps.peek() {
                if tj >= t1 {
                    break;
                }
                if tj > from {
                    pieces.push((from, tj - from, regime, node));
                    from = tj;
                }
                regime = next;
                jumps.next();
            }
            pieces.push((from, t1 - from, regime, node));
        }
        let n = self.model.n;
        let mut dw = Vec::with_capacity(pieces.len() * n);
        for &(_, tau, _, _) in &pieces {
            let s = tau.sqrt();
            for _ in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                dw.push(s * z);
            }
        }
        PathNoise { pieces, dw }
    }

    fn run(&self, noise: &PathNoise, arm: &Perturbation, sign: f64) -> ArmPath {
        let (m, n) = (self.model.m, self.model.n);
        let amounts = self.strategy.in_amounts();
        let beta = match self.utility {
            Utility::Exp { beta } => beta,
            _ => 0.0,
        };
        let factor = self.model.factor.as_ref();
        let mut xf = factor.map_or(0.0, |f| f.x0);
        let mut a = AffineControl::zeros(m);
        let mut pi = vec![0.0; m];
        let mut vol = vec![0.0; n];
        let mut log_x = self.x0.ln();
        let mut x = self.x0;
        let mut disc: f64 = 0.0;
        let mut acc = 0.0;
        let mut out = ArmPath { value: 0.0, wealth: 0.0, max_abs_c: 0.0, nonpositive: false, functional: 0.0 };
        for (p, &(t, tau, regime, node)) in noise.pieces.iter().enumerate() {
            let pc = self.table.piece(regime, t);
            self.strategy.affine_at(node, regime, xf, &mut a);
            for d in 0..m {
                pi[d] = a.pi0[d] + a.pi1[d] * x;
            }
            let mut c = a.c0 + a.c1 * x;
            if amounts {
                out.functional = out.functional.max((-beta * a.c1 * x).exp());
            }
            arm.apply(&mut pi, &mut c);
            out.max_abs_c = out.max_abs_c.max(c.abs());
            let r = pc.rate(xf);
            let mut premium = 0.0;
            vol.iter_mut().for_each(|v| *v = 0.0);
            for d in 0..m {
                premium += pi[d] * pc.excess(d, xf);
                for (k, v) in vol.iter_mut().enumerate() {
                    *v += pi[d] * pc.sigma[d * n + k];
                }
            }
            let dw = &noise.dw[p * n..(p + 1) * n];
            let mut shock = 0.0;
            let mut var = 0.0;
            for k in 0..n {
                shock += vol[k] * dw[k];
                var += vol[k] * vol[k];
            }
            shock *= sign;
            let weight = (-disc).exp();
            if amounts {
                acc += weight * self.utility.eval(c) * tau;
                x += (r * x + premium - c) * tau + shock;
                if x <= 0.0 {
                    out.nonpositive = true;
                }
            } else {
                acc += weight * self.utility.eval(c * x) * tau;
                log_x += (r + premium - c - 0.5 * var) * tau + shock;
                x = log_x.exp();
            }
            disc += pc.rho * tau;
            if let Some(f) = factor {
                let mut fshock = 0.0;
                for k in 0..n {
                    fshock += f.vol[k] * dw[k];
                }
                xf += f.drift(xf) * tau + sign * fshock;
            }
        }
        acc += (-disc).exp() * self.utility.eval(x);
        out.value = acc;
        out.wealth = x;
        out
    }

    /// Realised utilities of every arm on every path, in path order.
    fn sample(&self, arms: &[Perturbation]) -> Vec<Vec<ArmSample>> {
        let count = if self.cfg.antithetic { self.cfg.n_paths / 2 } else { self.cfg.n_paths };
        (0..count as u64)
            .into_par_iter()
            .map(|p| {
                let noise = self.noise(p);
                arms.iter()
                    .map(|arm| {
                        let a = self.run(&noise, arm, 1.0);
                        if self.cfg.antithetic {
                            let b = self.run(&noise, arm, -1.0);
                            let v = 0.5 * (a.value + b.value);
                            (v.is_finite().then_some(v), a, Some(b))
                        } else {
                            (a.value.is_finite().then_some(a.value), a, None)
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

fn mean_se(xs: impl Iterator<Item = f64>) -> (usize, f64, f64) {
    let (mut n, mut s, mut ss) = (0usize, 0.0, 0.0);
    for x in xs {
        n += 1;
        s += x;
        ss += x * x;
    }
    if n == 0 {
        return (0, f64::NAN, f64::NAN);
    }
    let mean = s / n as f64;
    let var = if n > 1 { ((ss - n as f64 * mean * mean) / (n - 1) as f64).max(0.0) } else { 0.0 };
    (n, mean, (var / n as f64).sqrt())
}

fn summarize(cfg: &SimConfig, amounts: bool, rows: &[(Option<f64>, ArmPath, Option<ArmPath>)]) -> SimResult {
    let (samples, mean, std_error) = mean_se(rows.iter().filter_map(|r| r.0));
    let paths: Vec<&ArmPath> = rows.iter().flat_map(|r| std::iter::once(&r.1).chain(r.2.as_ref())).collect();
    let (_, w_mean, w_se) = mean_se(paths.iter().map(|p| p.wealth));
    let w_std = w_se * (paths.len() as f64).sqrt();
    let functional = paths.iter().map(|p| p.functional).fold(0.0, f64::max);
    SimResult {
        n_paths: cfg.n_paths,
        antithetic: cfg.antithetic,
        samples,
        excluded: rows.len() - samples,
        mean,
        std_error,
        ci99: [mean - Z99 * std_error, mean + Z99 * std_error],
        terminal_wealth: WealthSummary {
            mean: w_mean,
            std: w_std,
            min: paths.iter().map(|p| p.wealth).fold(f64::INFINITY, f64::min),
            max: paths.iter().map(|p| p.wealth).fold(f64::NEG_INFINITY, f64::max),
        },
        nonpositive_wealth: paths.iter().filter(|p| p.nonpositive).count(),
        max_abs_consumption: paths.iter().map(|p| p.max_abs_c).fold(0.0, f64::max),
        max_exp_functional: amounts.then_some(functional),
    }
}

fn runner<'a>(
    model: &'a MarketModel,
    strategy: &'a FeedbackStrategy,
    x0: f64,
    i0: usize,
    cfg: SimConfig,
) -> Result<Runner<'a>> {
    let ratio = cfg.substeps(strategy.grid.dt())?;
    if strategy.ell != model.ell() || strategy.m != model.m {
        return Err(Error::Config("strategy was extracted for a different model".into()));
    }
    if (strategy.grid.horizon - model.horizon).abs() > 1e-12 * model.horizon {
        return Err(Error::Config("strategy horizon differs from the model horizon".into()));
    }
    if i0 >= model.ell() {
        return Err(Error::Domain(format!("regime index {i0} out of range for ℓ = {}", model.ell())));
    }
    if !strategy.in_amounts() && !(x0 > 0.0) {
        return Err(Error::Domain(format!("initial wealth must be positive, got {x0}")));
    }
    Ok(Runner { model, table: model.fast_table(), strategy, utility: strategy.utility, x0, i0, cfg, ratio })
}

/// Monte Carlo estimate of the objective under `strategy` from `(x0, i0)`.
pub fn simulate_wealth(
    model: &MarketModel,
    strategy: &FeedbackStrategy,
    x0: f64,
    i0: usize,
    cfg: &SimConfig,
) -> Result<SimResult> {
    simulate_perturbed(model, strategy, &Perturbation::Identity, x0, i0, cfg)
}

/// As [`simulate_wealth`] for one modification of the strategy.
pub fn simulate_perturbed(
    model: &MarketModel,
    strategy: &FeedbackStrategy,
    perturbation: &Perturbation,
    x0: f64,
    i0: usize,
    cfg: &SimConfig,
) -> Result<SimResult> {
    perturbation.check(strategy)?;
    let run = runner(model, strategy, x0, i0, *cfg)?;
    let rows: Vec<_> = run.sample(std::slice::from_ref(perturbation)).into_iter().map(|mut v| v.remove(0)).collect();
    Ok(summarize(cfg, strategy.in_amounts(), &rows))
}

/// Runs the candidate and every perturbation on common random numbers and
/// compares them through the paired differences.
pub fn perturbation_test(
    model: &MarketModel,
    strategy: &FeedbackStrategy,
    perturbations: &[Perturbation],
    x0: f64,
    i0: usize,
    cfg: &SimConfig,
) -> Result<PerturbationReport> {
    for p in perturbations {
        p.check(strategy)?;
    }
    let run = runner(model, strategy, x0, i0, *cfg)?;
    let mut arms = vec![Perturbation::Identity];
    arms.extend(perturbations.iter().cloned());
    let rows = run.sample(&arms);
    let column = |a: usize| -> Vec<_> { rows.iter().map(|r| r[a]).collect() };
    let base = column(0);
    let candidate = summarize(cfg, strategy.in_amounts(), &base);
    let outcomes = perturbations
        .iter()
        .enumerate()
        .map(|(a, p)| {
            let col = column(a + 1);
            let diffs = base.iter().zip(&col).filter_map(|(b, x)| Some(x.0? - b.0?));
            let (_, diff_mean, diff_se) = mean_se(diffs);
            PerturbationOutcome {
                perturbation: p.clone(),
                result: summarize(cfg, strategy.in_amounts(), &col),
                diff_mean,
                diff_se,
                not_better: diff_mean <= 3.0 * diff_se,
                strictly_worse: diff_mean < -3.0 * diff_se,
            }
        })
        .collect();
    Ok(PerturbationReport { candidate, outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsde::TimeGrid;
    use crate::constraints::ConstraintSet;
    use crate::strategy::{extract_strategy, solve_case, value_at};

    #[test]
    fn frozen_chain_never_jumps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let path = simulate_chain(&RegimeGenerator::frozen(3), 2, 10.0, &mut rng);
        assert!(path.jumps.is_empty());
        assert_eq!(path.state_at(5.0), 2);
    }

    #[test]
    fn symmetric_chain_occupation_and_rate() {
        let q = RegimeGenerator::symmetric_two_state(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let long = simulate_chain(&q, 0, 1000.0, &mut rng);
        let frac = long.occupation(0, 1000.0) / 1000.0;
        assert!((0.45..=0.55).contains(&frac), "{frac}");
        let counts: Vec<f64> = (0..4000).map(|_| simulate_chain(&q, 0, 1.0, &mut rng).jumps.len() as f64).collect();
        let (_, mean, se) = mean_se(counts.into_iter());
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean} ± {se}");
    }

    fn merton() -> MarketModel {
        MarketModel::single_regime_scalar(0.02, 0.06, 0.2, 0.0, 1.0)
    }

    #[test]
    fn zero_strategy_grows_at_the_rate() {
        let m = merton();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let sol = solve_case(&m, &Utility::Power { gamma: 0.5 }, &ConstraintSet::Unconstrained, &grid).unwrap();
        let s = extract_strategy(&m, &sol, &ConstraintSet::Unconstrained).unwrap();
        let zero = Perturbation::Fixed { pi: vec![0.0], c: 0.0 };
        let r = simulate_perturbed(&m, &s, &zero, 1.0, 0, &SimConfig::new(50, 3, 0.01)).unwrap();
        let want = 0.02f64.exp();
        assert!((r.terminal_wealth.min / want - 1.0).abs() < 1e-12);
        assert!((r.terminal_wealth.max / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn merton_mc_matches_value_and_is_reproducible() {
        let m = merton();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let sol = solve_case(&m, &Utility::Power { gamma: 0.5 }, &ConstraintSet::Unconstrained, &grid).unwrap();
        let s = extract_strategy(&m, &sol, &ConstraintSet::Unconstrained).unwrap();
        let v = value_at(&m, &sol, 1.0, 0).unwrap().value;
        let cfg = SimConfig::new(4000, 11, 0.01);
        let a = simulate_wealth(&m, &s, 1.0, 0, &cfg).unwrap();
        assert!((a.mean - v).abs() < 3.0 * a.std_error + 1e-3, "{} vs {v}", a.mean);
        assert_eq!(a, simulate_wealth(&m, &s, 1.0, 0, &cfg).unwrap());
    }

    #[test]
    fn identity_perturbation_has_zero_difference() {
        let m = merton();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let sol = solve_case(&m, &Utility::Log, &ConstraintSet::Unconstrained, &grid).unwrap();
        let s = extract_strategy(&m, &sol, &ConstraintSet::Unconstrained).unwrap();
        let rep = perturbation_test(&m, &s, &[Perturbation::Identity], 1.0, 0, &SimConfig::new(200, 5, 0.05)).unwrap();
        assert_eq!(rep.outcomes[0].diff_mean, 0.0);
        assert_eq!(rep.outcomes[0].result, rep.candidate);
    }

    #[test]
    fn infeasible_perturbation_is_rejected() {
        let m = merton();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let set = ConstraintSet::BudgetSimplex;
        let sol = solve_case(&m, &Utility::Power { gamma: 0.5 }, &set, &grid).unwrap();
        let s = extract_strategy(&m, &sol, &set).unwrap();
        let p = Perturbation::ScalePi { factor: 3.0 };
        assert!(matches!(p.check(&s), Err(Error::Infeasible(_))));
    }

    #[test]
    fn misaligned_dt_is_rejected() {
        let cfg = SimConfig::new(10, 0, 0.03);
        assert!(cfg.substeps(0.05).is_err());
        assert_eq!(SimConfig::new(10, 0, 0.001).substeps(0.01).unwrap(), 10);
    }
}
