//! Model instances, samplers and population expectations.

mod covariance;
pub mod expectation;
mod gmm;
mod gs;
mod reg;

pub use covariance::{CovKind, Covariance, MAX_DENSE_DIM};
pub use expectation::{population_expectation, untruncated_expectation, Expectation, McBudget};
pub use gmm::{Component, GmmParams};
pub use gs::{binomial, enum_cap, enumerate_gs, gs_size, SignSupportVector, DEFAULT_ENUM_CAP, ENUM_CAP_ENV};
pub use reg::{Hypothesis, RegParams};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sq::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    /// ΔμᵀΣ⁻¹Δμ
    GmmKnownCov,
    /// ‖Δμ‖₂⁴ / ΔμᵀΣΔμ
    GmmUnknownCov,
    /// ‖β‖₂² / σ²
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalStrength {
    pub value: f64,
    pub kind: SignalKind,
}

/// A data-generating distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Gmm(GmmParams),
    Reg(RegParams),
}

impl Instance {
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Dataset {
        match self {
            Instance::Gmm(p) => p.sample(n, rng),
            Instance::Reg(p) => p.sample(n, rng),
        }
    }

    /// Length of one sample point.
    pub fn sample_dim(&self) -> usize {
        match self {
            Instance::Gmm(p) => p.d(),
            Instance::Reg(p) => p.d() + 1,
        }
    }

    pub fn is_null(&self) -> bool {
        match self {
            Instance::Gmm(p) => p.is_null(),
            Instance::Reg(p) => p.is_null(),
        }
    }
}

impl From<GmmParams> for Instance {
    fn from(p: GmmParams) -> Self {
        Instance::Gmm(p)
    }
}

impl From<RegParams> for Instance {
    fn from(p: RegParams) -> Self {
        Instance::Reg(p)
    }
}
