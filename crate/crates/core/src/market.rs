//! Market model: regime chain generator, per-regime coefficient curves and an
//! optional one-dimensional mean-reverting factor.
//!
//! Coefficients are right-continuous step functions of time. The interest
//! rate and the appreciation vector may additionally depend affinely on the
//! factor value; volatility and discount rate never do.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;

/// Generator `Q` of the regime chain.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeGenerator {
    q: DMatrix<f64>,
}

impl RegimeGenerator {
    /// Wraps a square matrix. Sign and row-sum conditions are left to
    /// [`validate_model`] so that broken input can still be reported.
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if q.nrows() != q.ncols() || q.nrows() == 0 {
            return Err(Error::Domain(format!(
                "generator must be a non-empty square matrix, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        Ok(Self { q })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ell = rows.len();
        if rows.iter().any(|r| r.len() != ell) {
            return Err(Error::Domain("generator rows must all have length ℓ".into()));
        }
        Self::new(DMatrix::from_fn(ell, ell, |i, j| rows[i][j]))
    }

    /// A chain that never leaves its initial state.
    pub fn frozen(ell: usize) -> Self {
        Self { q: DMatrix::zeros(ell, ell) }
    }

    /// Two states with symmetric switching intensity.
    pub fn symmetric_two_state(rate: f64) -> Self {
        Self { q: DMatrix::from_row_slice(2, 2, &[-rate, rate, rate, -rate]) }
    }

    pub fn ell(&self) -> usize {
        self.q.nrows()
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.q[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// `max_i |q^{ii}|`.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.ell()).map(|i| self.q[(i, i)].abs()).fold(0.0, f64::max)
    }

    /// `Σ_j q^{ij} y_j`.
    #[inline]
    pub fn couple(&self, i: usize, y: &[f64]) -> f64 {
        let mut s = 0.0;
        for (j, yj) in y.iter().enumerate() {
            s += self.q[(i, j)] * yj;
        }
        s
    }
}

/// Right-continuous step function on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCurve<T> {
    starts: Vec<f64>,
    values: Vec<T>,
}

impl<T> StepCurve<T> {
    pub fn constant(value: T) -> Self {
        Self { starts: vec![0.0], values: vec![value] }
    }

    /// Pieces as `(t_start, value)`. Ordering is checked by validation.
    pub fn from_pieces(pieces: Vec<(f64, T)>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Domain("coefficient curve needs at least one piece".into()));
        }
        let (starts, values) = pieces.into_iter().unzip();
        Ok(Self { starts, values })
    }

    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn pieces(&self) -> impl Iterator<Item = (f64, &T)> {
        self.starts.iter().copied().zip(self.values.iter())
    }

    #[inline]
    pub fn index_at(&self, t: f64) -> usize {
        // last piece whose start is <= t
        match self.starts.partition_point(|&s| s <= t) {
            0 => 0,
            k => k - 1,
        }
    }

    #[inline]
    pub fn at(&self, t: f64) -> &T {
        &self.values[self.index_at(t)]
    }
}

/// Coefficient curves of one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeCoefficients {
    pub r: StepCurve<f64>,
    pub mu: StepCurve<DVector<f64>>,
    pub sigma: StepCurve<DMatrix<f64>>,
    pub rho: StepCurve<f64>,
    /// `∂r/∂x` for the factor value `x`.
    pub r_slope: f64,
    /// `∂μ/∂x`, length m.
    pub mu_slope: DVector<f64>,
}

impl RegimeCoefficients {
    /// Time-constant coefficients with no factor dependence.
    pub fn constant(r: f64, mu: DVector<f64>, sigma: DMatrix<f64>, rho: f64) -> Self {
        let m = mu.len();
        Self {
            r: StepCurve::constant(r),
            mu: StepCurve::constant(mu),
            sigma: StepCurve::constant(sigma),
            rho: StepCurve::constant(rho),
            r_slope: 0.0,
            mu_slope: DVector::zeros(m),
        }
    }

    /// Single asset, single Brownian motion, constant coefficients.
    pub fn scalar(r: f64, mu: f64, sigma: f64, rho: f64) -> Self {
        Self::constant(r, DVector::from_element(1, mu), DMatrix::from_element(1, 1, sigma), rho)
    }

    pub fn with_factor_slopes(mut self, r_slope: f64, mu_slope: DVector<f64>) -> Self {
        self.r_slope = r_slope;
        self.mu_slope = mu_slope;
        self
    }

    fn has_factor_dependence(&self) -> bool {
        self.r_slope != 0.0 || self.mu_slope.iter().any(|&v| v != 0.0)
    }

    /// Sorted union of all breakpoints of this regime's curves.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .r
            .starts()
            .iter()
            .chain(self.mu.starts())
            .chain(self.sigma.starts())
            .chain(self.rho.starts())
            .copied()
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}

/// Ornstein–Uhlenbeck factor `dX = κ(θ̄ − X)dt + v′dW` and its solver grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSpec {
    pub kappa: f64,
    pub theta: f64,
    /// Loading on the n Brownian motions.
    pub vol: DVector<f64>,
    pub x0: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub nodes: usize,
}

impl FactorSpec {
    pub fn drift(&self, x: f64) -> f64 {
        self.kappa * (self.theta - x)
    }

    pub fn grid(&self) -> Vec<f64> {
        let h = (self.x_max - self.x_min) / (self.nodes - 1) as f64;
        (0..self.nodes).map(|j| self.x_min + h * j as f64).collect()
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nodes - 1) as f64
    }
}

/// Coefficients evaluated at one `(t, regime, x)` point.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub r: f64,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// Excess return `μ − r·1`.
    pub b: DVector<f64>,
    pub rho: f64,
}

impl CoefficientSet {
    /// Builds the set from primitives; `b` is always derived.
    pub fn new(r: f64, mu: DVector<f64>, sigma: DMatrix<f64>, rho: f64) -> Self {
        let b = mu.add_scalar(-r);
        Self { r, mu, sigma, b, rho }
    }

    pub fn scalar(r: f64, mu: f64, sigma: f64, rho: f64) -> Self {
        Self::new(r, DVector::from_element(1, mu), DMatrix::from_element(1, 1, sigma), rho)
    }

    pub fn m(&self) -> usize {
        self.mu.len()
    }

    pub fn n(&self) -> usize {
        self.sigma.ncols()
    }

    /// `b′(σσ′)⁻¹b`.
    pub fn sharpe_sq(&self) -> f64 {
        let s = &self.sigma * self.sigma.transpose();
        match s.clone().cholesky() {
            Some(ch) => self.b.dot(&ch.solve(&self.b)),
            None => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    pub generator: RegimeGenerator,
    pub m: usize,
    pub n: usize,
    pub regimes: Vec<RegimeCoefficients>,
    pub factor: Option<FactorSpec>,
    pub horizon: f64,
    /// Declared ellipticity constant δ with `σσ′ ⪰ δI`.
    pub delta_floor: f64,
}

impl MarketModel {
    /// Single regime, one asset, constant coefficients.
    pub fn single_regime_scalar(r: f64, mu: f64, sigma: f64, rho: f64, horizon: f64) -> Self {
        Self {
            generator: RegimeGenerator::frozen(1),
            m: 1,
            n: 1,
            regimes: vec![RegimeCoefficients::scalar(r, mu, sigma, rho)],
            factor: None,
            horizon,
            delta_floor: (sigma * sigma).clamp(1e-300, 1e-4),
        }
    }

    pub fn ell(&self) -> usize {
        self.regimes.len()
    }

    pub fn factor_enabled(&self) -> bool {
        self.factor.is_some()
    }

    /// Coefficients at `(t, regime, x)`. `x` must be given exactly when the
    /// factor is enabled.
    pub fn coeff_at(&self, t: f64, regime: usize, x: Option<f64>) -> Result<CoefficientSet> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Domain(format!("time {t} outside [0, {}]", self.horizon)));
        }
        if regime >= self.ell() {
            return Err(Error::Domain(format!(
                "regime index {regime} out of range for ℓ = {}",
                self.ell()
            )));
        }
        let xv = match (self.factor_enabled(), x) {
            (true, Some(v)) => v,
            (false, None) => 0.0,
            (true, None) => return Err(Error::Domain("factor value required".into())),
            (false, Some(_)) => {
                return Err(Error::Domain("factor value given but factor disabled".into()))
            }
        };
        Ok(self.coeff_unchecked(t, regime, xv))
    }

    /// Evaluation without range checks; `x` is ignored unless slopes are set.
    pub fn coeff_unchecked(&self, t: f64, regime: usize, x: f64) -> CoefficientSet {
        let rc = &self.regimes[regime];
        let r = rc.r.at(t) + rc.r_slope * x;
        let mu = rc.mu.at(t) + &rc.mu_slope * x;
        CoefficientSet::new(r, mu, rc.sigma.at(t).clone(), *rc.rho.at(t))
    }

    /// Sorted union of breakpoints over all regimes.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.regimes.iter().flat_map(|r| r.breakpoints()).collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    /// Factor nodes used by grid solvers, or `[0.0]` without a factor.
    pub fn factor_nodes(&self) -> Vec<f64> {
        match &self.factor {
            Some(f) => f.grid(),
            None => vec![0.0],
        }
    }

    /// Whether `r` is the same deterministic function of time in every regime.
    pub fn rate_is_deterministic_common(&self) -> bool {
        let first = &self.regimes[0];
        self.regimes.iter().all(|rc| rc.r_slope == 0.0 && rc.r == first.r)
    }

    pub fn fast_table(&self) -> CoefficientTable {
        CoefficientTable::new(self)
    }
}

/// Which standing assumptions to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssumptionSet {
    /// Bounded coefficients and uniform ellipticity.
    PowerLog,
    /// In addition a regime-independent deterministic interest rate.
    ExpDeterministicRate,
    /// Complete market (m = n) with regime-independent r, μ, σ.
    ExpRandomRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Horizon,
    Delta,
    Dimensions,
    Generator,
    Curve,
    NonFinite,
    Ellipticity,
    Factor,
    Assumption,
}

/// One broken invariant. `regime` is zero-based; messages print it one-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub regime: Option<usize>,
    pub time: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, kind: ViolationKind, regime: Option<usize>, time: Option<f64>, message: String) {
        self.violations.push(Violation { kind, regime, time, message });
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "model valid");
        }
        for v in &self.violations {
            writeln!(f, "{}", v.message)?;
        }
        Ok(())
    }
}

fn check_curve<T>(
    report: &mut ValidationReport,
    name: &str,
    regime: usize,
    curve: &StepCurve<T>,
    horizon: f64,
    finite: impl Fn(&T) -> bool,
) {
    let starts = curve.starts();
    if starts.first().copied() != Some(0.0) {
        report.push(
            ViolationKind::Curve,
            Some(regime),
            None,
            format!("{name} curve does not start at t=0 at regime {}", regime + 1),
        );
    }
    for w in starts.windows(2) {
        if !(w[1] > w[0]) {
            report.push(
                ViolationKind::Curve,
                Some(regime),
                Some(w[1]),
                format!("{name} breakpoints not strictly increasing at regime {}, t={}", regime + 1, w[1]),
            );
        }
    }
    if let Some(&last) = starts.last() {
        if last >= horizon && starts.len() > 1 {
            report.push(
                ViolationKind::Curve,
                Some(regime),
                Some(last),
                format!("{name} breakpoint t={last} not inside [0, T) at regime {}", regime + 1),
            );
        }
    }
    for (t, v) in curve.pieces() {
        if !t.is_finite() || !finite(v) {
            report.push(
                ViolationKind::NonFinite,
                Some(regime),
                Some(t),
                format!("{name} has a non-finite value at regime {}, t={t}", regime + 1),
            );
        }
    }
}

/// Lists every violated invariant of `model` for the chosen assumption set.
/// Never fails: problems are report entries.
pub fn validate_model(model: &MarketModel, mode: AssumptionSet) -> ValidationReport {
    let mut rep = ValidationReport::default();
    if !(model.horizon.is_finite() && model.horizon > 0.0) {
        rep.push(ViolationKind::Horizon, None, None, format!("horizon T = {} must be positive", model.horizon));
    }
    if !(model.delta_floor.is_finite() && model.delta_floor > 0.0) {
        rep.push(ViolationKind::Delta, None, None, format!("δ = {} must be positive", model.delta_floor));
    }
    if model.m == 0 || model.m > model.n {
        rep.push(
            ViolationKind::Dimensions,
            None,
            None,
            format!("asset dimensions need 1 ≤ m ≤ n, got m={}, n={}", model.m, model.n),
        );
    }

    let q = model.generator.matrix();
    let ell = model.generator.ell();
    if ell != model.regimes.len() {
        rep.push(
            ViolationKind::Generator,
            None,
            None,
            format!("generator is {ell}x{ell} but {} regimes are declared", model.regimes.len()),
        );
    }
    for i in 0..ell {
        let mut sum = 0.0;
        for j in 0..ell {
            let v = q[(i, j)];
            if !v.is_finite() {
                rep.push(ViolationKind::NonFinite, Some(i), None, format!("non-finite rate q[{}][{}]", i + 1, j + 1));
            }
            if i != j && v < 0.0 {
                rep.push(
                    ViolationKind::Generator,
                    Some(i),
                    None,
                    format!("negative off-diagonal rate q[{}][{}] = {v} at regime {}", i + 1, j + 1, i + 1),
                );
            }
            sum += v;
        }
        if sum.abs() > ROW_SUM_TOL {
            rep.push(
                ViolationKind::Generator,
                Some(i),
                None,
                format!("row sum ≠ 0 at regime {}: {sum}", i + 1),
            );
        }
    }

    let (m, n, t_end) = (model.m, model.n, model.horizon);
    for (i, rc) in model.regimes.iter().enumerate() {
        check_curve(&mut rep, "r", i, &rc.r, t_end, |v| v.is_finite());
        check_curve(&mut rep, "rho", i, &rc.rho, t_end, |v| v.is_finite());
        check_curve(&mut rep, "mu", i, &rc.mu, t_end, |v| v.iter().all(|x| x.is_finite()));
        check_curve(&mut rep, "sigma", i, &rc.sigma, t_end, |v| v.iter().all(|x| x.is_finite()));
        for (t, mu) in rc.mu.pieces() {
            if mu.len() != m {
                rep.push(
                    ViolationKind::Dimensions,
                    Some(i),
                    Some(t),
                    format!("mu has length {} ≠ m={m} at regime {}", mu.len(), i + 1),
                );
            }
        }
        if rc.mu_slope.len() != m || !rc.r_slope.is_finite() || rc.mu_slope.iter().any(|v| !v.is_finite()) {
            rep.push(
                ViolationKind::Dimensions,
                Some(i),
                None,
                format!("factor slopes malformed at regime {}", i + 1),
            );
        }
        for (t, s) in rc.sigma.pieces() {
            if s.nrows() != m || s.ncols() != n {
                rep.push(
                    ViolationKind::Dimensions,
                    Some(i),
                    Some(t),
                    format!("sigma is {}x{} ≠ {m}x{n} at regime {}", s.nrows(), s.ncols(), i + 1),
                );
                continue;
            }
            if s.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let ss = s * s.transpose();
            let lmin = ss.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
            if !(lmin >= model.delta_floor) {
                rep.push(
                    ViolationKind::Ellipticity,
                    Some(i),
                    Some(t),
                    format!(
                        "σσ′ eigenvalue {lmin} < δ at regime {}, t={t}",
                        i + 1
                    ),
                );
            }
        }
        if model.factor.is_none() && rc.has_factor_dependence() {
            rep.push(
                ViolationKind::Factor,
                Some(i),
                None,
                format!("factor sensitivities set but factor disabled at regime {}", i + 1),
            );
        }
    }

    if let Some(f) = &model.factor {
        let finite = [f.kappa, f.theta, f.x0, f.x_min, f.x_max].iter().all(|v| v.is_finite())
            && f.vol.iter().all(|v| v.is_finite());
        if !finite {
            rep.push(ViolationKind::Factor, None, None, "factor parameters must be finite".into());
        }
        if f.vol.len() != n {
            rep.push(
                ViolationKind::Factor,
                None,
                None,
                format!("factor volatility has length {} ≠ n={n}", f.vol.len()),
            );
        }
        if !(f.x_min < f.x0 && f.x0 < f.x_max) {
            rep.push(
                ViolationKind::Factor,
                None,
                None,
                format!("factor needs x_min < x0 < x_max, got {} < {} < {}", f.x_min, f.x0, f.x_max),
            );
        }
        if f.nodes < 3 {
            rep.push(ViolationKind::Factor, None, None, format!("factor grid needs ≥ 3 nodes, got {}", f.nodes));
        }
    }

    match mode {
        AssumptionSet::PowerLog => {}
        AssumptionSet::ExpDeterministicRate => {
            if !model.regimes.is_empty() && !model.rate_is_deterministic_common() {
                rep.push(
                    ViolationKind::Assumption,
                    None,
                    None,
                    "exponential utility with deterministic rate needs r regime-independent and factor-free".into(),
                );
            }
        }
        AssumptionSet::ExpRandomRate => {
            if m != n {
                rep.push(
                    ViolationKind::Assumption,
                    None,
                    None,
                    format!("random-rate exponential case needs m = n, got m={m}, n={n}"),
                );
            }
            if let Some(first) = model.regimes.first() {
                for (i, rc) in model.regimes.iter().enumerate().skip(1) {
                    if rc.r != first.r
                        || rc.mu != first.mu
                        || rc.sigma != first.sigma
                        || rc.r_slope != first.r_slope
                        || rc.mu_slope != first.mu_slope
                    {
                        rep.push(
                            ViolationKind::Assumption,
                            Some(i),
                            None,
                            format!("r, μ, σ must be regime-independent; regime {} differs", i + 1),
                        );
                    }
                }
            }
        }
    }
    rep
}

/// Allocation-free coefficient lookup for the Monte Carlo inner loop.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    m: usize,
    n: usize,
    regimes: Vec<RegimeTable>,
}

#[derive(Debug, Clone)]
struct RegimeTable {
    starts: Vec<f64>,
    pieces: Vec<PieceCoeffs>,
}

/// Coefficients on one interval of constancy; `σ` is row-major m×n.
#[derive(Debug, Clone)]
pub struct PieceCoeffs {
    pub r: f64,
    pub r_slope: f64,
    pub rho: f64,
    pub mu: Vec<f64>,
    pub mu_slope: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl PieceCoeffs {
    #[inline]
    pub fn rate(&self, x: f64) -> f64 {
        self.r + self.r_slope * x
    }

    /// `b_k = μ_k − r` at factor value `x`.
    #[inline]
    pub fn excess(&self, k: usize, x: f64) -> f64 {
        self.mu[k] + self.mu_slope[k] * x - self.rate(x)
    }
}

impl CoefficientTable {
    pub fn new(model: &MarketModel) -> Self {
        let regimes = model
            .regimes
            .iter()
            .map(|rc| {
                let starts = rc.breakpoints();
                let pieces = starts
                    .iter()
                    .map(|&t| {
                        let s = rc.sigma.at(t);
                        PieceCoeffs {
                            r: *rc.r.at(t),
                            r_slope: rc.r_slope,
                            rho: *rc.rho.at(t),
                            mu: rc.mu.at(t).iter().copied().collect(),
                            mu_slope: rc.mu_slope.iter().copied().collect(),
                            sigma: (0..s.nrows())
                                .flat_map(|a| (0..s.ncols()).map(move |c| (a, c)))
                                .map(|(a, c)| s[(a, c)])
                                .collect(),
                        }
                    })
                    .collect();
                RegimeTable { starts, pieces }
            })
            .collect();
        Self { m: model.m, n: model.n, regimes }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn piece(&self, regime: usize, t: f64) -> &PieceCoeffs {
        let rt = &self.regimes[regime];
        let k = match rt.starts.partition_point(|&s| s <= t) {
            0 => 0,
            k => k - 1,
        };
        &rt.pieces[k]
    }

    /// Start of the next breakpoint strictly after `t` in `regime`, if any.
    pub fn next_break(&self, regime: usize, t: f64) -> Option<f64> {
        let rt = &self.regimes[regime];
        rt.starts.iter().copied().find(|&s| s > t)
    }
}
