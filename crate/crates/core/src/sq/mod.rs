//! The statistical query model: bounded queries, oracle configuration and tolerance,
//! transcripts, and the budget-enforcing algorithm runner.

mod dataset;
mod query;
mod session;
mod transcript;

pub use dataset::Dataset;
pub use query::{BoundMode, BoundedQuery, EvalScratch, FamilyTag, QueryKernel, SparseDirection};
pub use session::{run_algorithm, FnAlgorithm, Oracle, Run, Session, SqAlgorithm};
pub use transcript::{Transcript, TranscriptEntry};

use crate::error::{domain, Result};
use serde::{Deserialize, Serialize};

/// The tuple (ξ, n, T, η(Q)) governing an oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub xi: f64,
    pub n: usize,
    /// Query budget T.
    pub budget: usize,
    /// Capacity η(Q) of the query class.
    pub capacity: f64,
}

impl OracleConfig {
    pub fn new(xi: f64, n: usize, budget: usize, capacity: f64) -> Result<Self> {
        let cfg = OracleConfig { xi, n, budget, capacity };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Capacity set to `log budget`, as for a finite class of `budget` queries.
    pub fn for_finite_class(xi: f64, n: usize, budget: usize) -> Result<Self> {
        Self::new(xi, n, budget, finite_capacity(budget.max(1) as u128)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(domain(format!("xi must lie in (0,1), got {}", self.xi)));
        }
        if self.n == 0 {
            return Err(domain("sample size n must be positive"));
        }
        if !(self.capacity >= 0.0) || !self.capacity.is_finite() {
            return Err(domain(format!("capacity must be finite and >= 0, got {}", self.capacity)));
        }
        Ok(())
    }

    pub fn tolerance(&self, bound: f64, expectation: f64) -> Result<f64> {
        tolerance(self, bound, expectation)
    }
}

/// Oracle tolerance for a query bounded by `bound` with mean `expectation`:
/// `max{ (η + log 1/ξ) M / n, sqrt(2 (η + log 1/ξ)(M² − E²) / n) }`.
pub fn tolerance(config: &OracleConfig, bound: f64, expectation: f64) -> Result<f64> {
    config.validate()?;
    if !(bound > 0.0) {
        return Err(domain(format!("query bound must be positive, got {bound}")));
    }
    if expectation.abs() > bound {
        return Err(domain(format!("|expectation| = {} exceeds bound {bound}", expectation.abs())));
    }
    let kappa = config.capacity + (1.0 / config.xi).ln();
    let n = config.n as f64;
    let linear = kappa * bound / n;
    let var = (bound * bound - expectation * expectation).max(0.0);
    let root = (2.0 * kappa * var / n).sqrt();
    Ok(linear.max(root))
}

/// `log |Q|` for a finite class.
pub fn finite_capacity(class_size: u128) -> Result<f64> {
    if class_size == 0 {
        return Err(domain("class size must be at least 1"));
    }
    Ok((class_size as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(xi: f64, n: usize, cap: f64) -> OracleConfig {
        OracleConfig::new(xi, n, 1, cap).unwrap()
    }

    #[test]
    fn tolerance_examples() {
        let e = std::f64::consts::E;
        assert_relative_eq!(tolerance(&cfg(1.0 / e, 100, 0.0), 1.0, 1.0).unwrap(), 0.01, epsilon = 1e-15);
        let t = tolerance(&cfg(0.05, 400, 10f64.ln()), 2.0, 0.0).unwrap();
        let kappa = 10f64.ln() + 20f64.ln();
        assert_relative_eq!(t, (2.0 * kappa * 4.0 / 400.0).sqrt(), epsilon = 1e-15);
        assert!((t - 0.325_525).abs() < 1e-6, "{t}");
        let t4 = tolerance(&cfg(0.05, 1600, 10f64.ln()), 2.0, 0.0).unwrap();
        assert_relative_eq!(t4, t / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn tolerance_errors() {
        assert!(tolerance(&cfg(0.05, 10, 0.0), 1.0, 1.5).is_err());
        assert!(OracleConfig::new(0.0, 10, 1, 0.0).is_err());
        assert!(OracleConfig::new(1.0, 10, 1, 0.0).is_err());
        assert!(OracleConfig::new(0.1, 10, 1, -1.0).is_err());
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(finite_capacity(1).unwrap(), 0.0);
        assert!((finite_capacity(760).unwrap() - 6.633_318).abs() < 1e-6);
        assert!((finite_capacity(100).unwrap() - 4.605_170).abs() < 1e-6);
        assert!(finite_capacity(0).is_err());
    }
}
