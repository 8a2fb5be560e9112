use crate::error::{Error, Result};

/// Uniform time grid `t_k = kT/N`, `k = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
    /// Corrector sweeps per step for the nonlinear generator in factor mode.
    pub sweeps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Domain(format!("time grid needs N ≥ 2, got {steps}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { horizon, steps, sweeps: 1 })
    }

    /// Sets the number of corrector sweeps (at least one).
    pub fn with_sweeps(mut self, sweeps: usize) -> Self {
        self.sweeps = sweeps.max(1);
        self
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }

    /// Left node index of `t`, clamped to `0..N`.
    pub fn left_index(&self, t: f64) -> usize {
        let s = (t / self.dt()).floor();
        if s <= 0.0 {
            0
        } else {
            let k = s as usize;
            // guard against t_k landing a rounding error below k·dt
            let k = if k < self.steps && self.node(k + 1) <= t { k + 1 } else { k };
            k.min(self.steps)
        }
    }

    /// Sample times for sup/inf scans: nodes and step midpoints.
    pub fn scan_times(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.steps + 1);
        for k in 0..self.steps {
            out.push(self.node(k));
            out.push(0.5 * (self.node(k) + self.node(k + 1)));
        }
        out.push(self.horizon);
        out
    }
}
