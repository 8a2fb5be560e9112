use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Investor preference. Power and log utilities act on wealth proportions,
/// exponential utility on amounts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "utility", rename_all = "kebab-case")]
pub enum Utility {
    /// `U(x) = x^γ / γ`, γ ∈ (−∞, 0) ∪ (0, 1).
    Power { gamma: f64 },
    /// `U(x) = ln x`.
    Log,
    /// `U(x) = −exp(−βx)`, β > 0.
    Exp { beta: f64 },
}

impl Utility {
    pub fn check(&self) -> Result<()> {
        match *self {
            Utility::Power { gamma } => {
                if !gamma.is_finite() || gamma == 0.0 || gamma >= 1.0 {
                    return Err(Error::Domain(format!(
                        "power utility needs γ in (−∞,0)∪(0,1), got {gamma}"
                    )));
                }
            }
            Utility::Log => {}
            Utility::Exp { beta } => {
                if !(beta.is_finite() && beta > 0.0) {
                    return Err(Error::Domain(format!("exponential utility needs β > 0, got {beta}")));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Utility::Power { gamma } => x.powf(gamma) / gamma,
            Utility::Log => x.ln(),
            Utility::Exp { beta } => -(-beta * x).exp(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Utility::Power { .. } => "power",
            Utility::Log => "log",
            Utility::Exp { .. } => "exp",
        }
    }
}
