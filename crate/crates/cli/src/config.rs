//! On-disk configuration: the market model document and the optional run
//! document whose keys mirror the command-line flags.
//!
//! Model document (JSON):
//!
//! ```json
//! {
//!   "horizon": 1.0,
//!   "delta": 1e-3,
//!   "assets": { "m": 1, "n": 1 },
//!   "generator": [[-1.0, 1.0], [1.0, -1.0]],
//!   "regimes": [
//!     { "r": 0.02, "mu": [0.06], "sigma": [[0.2]], "rho": 0.0 },
//!     { "r": [{ "t_start": 0.0, "value": 0.01 }, { "t_start": 0.5, "value": 0.03 }],
//!       "mu": [0.05], "sigma": [[0.3]], "rho": 0.01 }
//!   ],
//!   "factor": { "kappa": 1.0, "theta": 0.0, "vol": [0.2], "x0": 0.0,
//!               "x_min": -1.0, "x_max": 1.0, "nodes": 41 }
//! }
//! ```
//!
//! Each coefficient is either a constant or a list of `{t_start, value}`
//! pieces. Factor sensitivities go in `r_slope` and `mu_slope` per regime.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rsci_core::market::{RegimeCoefficients, StepCurve};
use rsci_core::{ConstraintSet, FactorSpec, MarketModel, RegimeGenerator, Utility};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Curve<T> {
    Constant(T),
    Pieces(Vec<Piece<T>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece<T> {
    pub t_start: f64,
    pub value: T,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assets {
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeConfig {
    pub r: Curve<f64>,
    pub mu: Curve<Vec<f64>>,
    pub sigma: Curve<Vec<Vec<f64>>>,
    pub rho: Curve<f64>,
    #[serde(default)]
    pub r_slope: f64,
    #[serde(default)]
    pub mu_slope: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub kappa: f64,
    pub theta: f64,
    pub vol: Vec<f64>,
    pub x0: f64,
    pub x_min: f64,
    pub x_max: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_nodes() -> usize {
    41
}

fn default_delta() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub horizon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub assets: Assets,
    pub generator: Vec<Vec<f64>>,
    pub regimes: Vec<RegimeConfig>,
    #[serde(default)]
    pub factor: Option<FactorConfig>,
}

fn step_curve<T, U>(curve: &Curve<T>, convert: impl Fn(&T) -> Result<U, String>) -> Result<StepCurve<U>, String> {
    match curve {
        Curve::Constant(v) => Ok(StepCurve::constant(convert(v)?)),
        Curve::Pieces(ps) => {
            let pieces = ps.iter().map(|p| Ok((p.t_start, convert(&p.value)?))).collect::<Result<Vec<_>, String>>()?;
            StepCurve::from_pieces(pieces).map_err(|e| e.to_string())
        }
    }
}

fn matrix(rows: &[Vec<f64>], m: usize, n: usize) -> Result<DMatrix<f64>, String> {
    if rows.len() != m || rows.iter().any(|r| r.len() != n) {
        return Err(format!("sigma must be {m}x{n}"));
    }
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

impl ModelConfig {
    /// Builds the in-memory model. Shape errors are reported here; the
    /// standing assumptions are left to validation.
    pub fn to_model(&self) -> Result<MarketModel, CliError> {
        let (m, n) = (self.assets.m, self.assets.n);
        let generator = RegimeGenerator::from_rows(&self.generator).map_err(|e| CliError::Validation(e.to_string()))?;
        let regimes = self
            .regimes
            .iter()
            .enumerate()
            .map(|(i, rc)| {
                let at = |e: String| format!("regime {}: {e}", i + 1);
                let mu_slope = rc.mu_slope.clone().unwrap_or_else(|| vec![0.0; m]);
                Ok(RegimeCoefficients {
                    r: step_curve(&rc.r, |v| Ok(*v)).map_err(at)?,
                    mu: step_curve(&rc.mu, |v| Ok(DVector::from_column_slice(v))).map_err(at)?,
                    sigma: step_curve(&rc.sigma, |v| matrix(v, m, n)).map_err(at)?,
                    rho: step_curve(&rc.rho, |v| Ok(*v)).map_err(at)?,
                    r_slope: rc.r_slope,
                    mu_slope: DVector::from_vec(mu_slope),
                })
            })
            .collect::<Result<Vec<_>, String>>()
            .map_err(CliError::Validation)?;
        let factor = self.factor.as_ref().map(|f| FactorSpec {
            kappa: f.kappa,
            theta: f.theta,
            vol: DVector::from_column_slice(&f.vol),
            x0: f.x0,
            x_min: f.x_min,
            x_max: f.x_max,
            nodes: f.nodes,
        });
        Ok(MarketModel { generator, m, n, regimes, factor, horizon: self.horizon, delta_floor: self.delta })
    }
}

/// Constraint family with parameters; `null` bounds are infinite.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstraintConfig {
    Unconstrained,
    NoShorting,
    Box {
        pi_lower: Vec<Option<f64>>,
        pi_upper: Vec<Option<f64>>,
        #[serde(default)]
        c_lower: f64,
        #[serde(default)]
        c_upper: Option<f64>,
    },
    BudgetSimplex,
    HalfSpace {
        a: Vec<f64>,
        a0: f64,
        bound: f64,
    },
}

impl ConstraintConfig {
    /// Accepts a bare family name or an inline JSON object.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let t = text.trim();
        let json = if t.starts_with('{') { t.to_string() } else { format!("{{\"family\":\"{t}\"}}") };
        serde_json::from_str(&json).map_err(|e| CliError::Parse(format!("--constraints: {e}")))
    }

    pub fn to_set(&self) -> ConstraintSet {
        let lower = |v: &[Option<f64>]| v.iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect();
        let upper = |v: &[Option<f64>]| v.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
        match self {
            ConstraintConfig::Unconstrained => ConstraintSet::Unconstrained,
            ConstraintConfig::NoShorting => ConstraintSet::NoShorting,
            ConstraintConfig::Box { pi_lower, pi_upper, c_lower, c_upper } => ConstraintSet::Box {
                pi_lower: lower(pi_lower),
                pi_upper: upper(pi_upper),
                c_lower: *c_lower,
                c_upper: c_upper.unwrap_or(f64::INFINITY),
            },
            ConstraintConfig::BudgetSimplex => ConstraintSet::BudgetSimplex,
            ConstraintConfig::HalfSpace { a, a0, bound } => {
                ConstraintSet::HalfSpace { a: a.clone(), a0: *a0, bound: *bound }
            }
        }
    }
}

/// Run document; every key is optional and overridden by its flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    pub utility: Option<String>,
    pub gamma: Option<f64>,
    pub beta: Option<f64>,
    pub constraints: Option<serde_json::Value>,
    pub grid_n: Option<usize>,
    pub factor_nodes: Option<usize>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub antithetic: Option<bool>,
    pub x0: Option<f64>,
    pub regime: Option<usize>,
    pub out: Option<PathBuf>,
    pub sweep_values: Option<Vec<f64>>,
}

/// Reads and parses a JSON document, naming the file and position on failure.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(T, Vec<u8>), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value = serde_json::from_slice(&bytes).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    Ok((value, bytes))
}

pub fn utility_from(name: &str, gamma: Option<f64>, beta: Option<f64>) -> Result<Utility, CliError> {
    let u = match name {
        "power" => Utility::Power {
            gamma: gamma.ok_or_else(|| CliError::Parse("power utility needs --gamma".into()))?,
        },
        "log" => Utility::Log,
        "exp" => Utility::Exp { beta: beta.ok_or_else(|| CliError::Parse("exponential utility needs --beta".into()))? },
        other => return Err(CliError::Parse(format!("unknown utility {other:?}; expected power, log or exp"))),
    };
    u.check().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_accept_constants_and_pieces() {
        let doc = r#"{
            "horizon": 1.0, "assets": {"m": 1, "n": 1}, "generator": [[0.0]],
            "regimes": [{"r": [{"t_start": 0.0, "value": 0.01}, {"t_start": 0.5, "value": 0.02}],
                         "mu": [0.05], "sigma": [[0.2]], "rho": 0.0}]
        }"#;
        let cfg: ModelConfig = serde_json::from_str(doc).unwrap();
        let model = cfg.to_model().unwrap();
        assert_eq!(model.coeff_unchecked(0.7, 0, 0.0).r, 0.02);
        assert_eq!(model.delta_floor, 1e-3);
    }

    #[test]
    fn constraint_flags() {
        assert!(matches!(ConstraintConfig::parse("budget-simplex").unwrap(), ConstraintConfig::BudgetSimplex));
        let b = ConstraintConfig::parse(r#"{"family":"box","pi_lower":[null],"pi_upper":[1.0]}"#).unwrap();
        match b.to_set() {
            ConstraintSet::Box { pi_lower, c_upper, .. } => {
                assert_eq!(pi_lower[0], f64::NEG_INFINITY);
                assert_eq!(c_upper, f64::INFINITY);
            }
            _ => panic!(),
        }
        assert!(matches!(ConstraintConfig::parse("simplex"), Err(CliError::Parse(_))));
    }
}
