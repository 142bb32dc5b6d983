use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{SignSupportVector, SignalKind, SignalStrength};
use crate::error::{domain, Result};
use crate::sq::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hypothesis {
    Null,
    Alternative,
}

/// Symmetric mixture of sparse regressions `y = η β vᵀx + ε`, `x ~ N(0, I)`,
/// `η` Rademacher, `ε ~ N(0, σ²)`. The matched null draws `y ~ N(0, σ² + sβ²)`
/// independently of `x`, so both hypotheses share the marginal law of `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegParams {
    pub beta: f64,
    pub direction: SignSupportVector,
    pub sigma: f64,
    pub hypothesis: Hypothesis,
}

impl RegParams {
    pub fn new(beta: f64, direction: SignSupportVector, sigma: f64, hypothesis: Hypothesis) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(domain(format!("beta must be finite and >= 0, got {beta}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(domain(format!("sigma must be positive, got {sigma}")));
        }
        Ok(RegParams { beta, direction, sigma, hypothesis })
    }

    pub fn alternative(beta: f64, direction: SignSupportVector, sigma: f64) -> Result<Self> {
        Self::new(beta, direction, sigma, Hypothesis::Alternative)
    }

    pub fn null(beta: f64, direction: SignSupportVector, sigma: f64) -> Result<Self> {
        Self::new(beta, direction, sigma, Hypothesis::Null)
    }

    /// The null partner of this instance.
    pub fn to_null(&self) -> Self {
        RegParams { hypothesis: Hypothesis::Null, ..self.clone() }
    }

    pub fn d(&self) -> usize {
        self.direction.d()
    }

    pub fn s(&self) -> usize {
        self.direction.s()
    }

    /// σ₀² = σ² + sβ².
    pub fn null_sigma0_sq(&self) -> f64 {
        self.sigma * self.sigma + self.s() as f64 * self.beta * self.beta
    }

    pub fn is_null(&self) -> bool {
        self.hypothesis == Hypothesis::Null || self.beta == 0.0
    }

    pub fn signal_strength(&self) -> SignalStrength {
        let value = if self.is_null() { 0.0 } else { self.s() as f64 * self.beta * self.beta / (self.sigma * self.sigma) };
        SignalStrength { value, kind: SignalKind::Regression }
    }

    /// Samples in the layout `[y, x_1, ..., x_d]`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Dataset {
        let d = self.d();
        let dim = d + 1;
        let mut cols = vec![0.0; n * dim];
        let sd0 = self.null_sigma0_sq().sqrt();
        for i in 0..n {
            let mut proj = 0.0;
            for j in 0..d {
                let x: f64 = rng.sample(StandardNormal);
                cols[(j + 1) * n + i] = x;
                proj += self.direction.entries()[j] as f64 * x;
            }
            let e: f64 = rng.sample(StandardNormal);
            cols[i] = if self.hypothesis == Hypothesis::Null {
                sd0 * e
            } else {
                let eta = if rng.random::<bool>() { 1.0 } else { -1.0 };
                eta * self.beta * proj + self.sigma * e
            };
        }
        Dataset::from_columns(n, dim, cols).expect("consistent shape")
    }
}
