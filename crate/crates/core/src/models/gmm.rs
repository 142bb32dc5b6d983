use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Covariance, SignSupportVector, SignalKind, SignalStrength};
use crate::error::{domain, Error, Result};
use crate::sq::{Dataset, SparseDirection};

/// Two-component Gaussian mixture `ν N(μ₁, Σ) + (1−ν) N(μ₂, Σ)`.
/// A null instance has `μ₁ = μ₂ = μ₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    pub nu: f64,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    pub sigma: Covariance,
}

/// One Gaussian component of a one-dimensional projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

impl GmmParams {
    pub fn new(nu: f64, mu1: Vec<f64>, mu2: Vec<f64>, sigma: Covariance) -> Result<Self> {
        if !(nu > 0.0 && nu < 1.0) {
            return Err(domain(format!("mixing weight must lie in (0,1), got {nu}")));
        }
        let d = sigma.dim();
        for m in [&mu1, &mu2] {
            if m.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: m.len() });
            }
        }
        Ok(GmmParams { nu, mu1, mu2, sigma })
    }

    /// `N(0, Σ)`.
    pub fn null(sigma: Covariance) -> Self {
        let d = sigma.dim();
        GmmParams { nu: 0.5, mu1: vec![0.0; d], mu2: vec![0.0; d], sigma }
    }

    /// `θ = [−β(1−ν)v, βνv, Σ]`: mean zero, `Δμ = βv`.
    pub fn sparse_alternative(v: &SignSupportVector, beta: f64, nu: f64, sigma: Covariance) -> Result<Self> {
        if v.d() != sigma.dim() {
            return Err(Error::DimensionMismatch { expected: sigma.dim(), got: v.d() });
        }
        let mu1 = v.entries().iter().map(|&e| -beta * (1.0 - nu) * e as f64).collect();
        let mu2 = v.entries().iter().map(|&e| beta * nu * e as f64).collect();
        Self::new(nu, mu1, mu2, sigma)
    }

    /// The unknown-covariance instance `½N(−βv, Σ₁) + ½N(βv, Σ₁)`, `Σ₁ = I − β²vvᵀ`.
    /// It has identity marginal covariance, so `N(0, I)` is its matched null.
    pub fn unknown_cov_alternative(v: &SignSupportVector, beta: f64) -> Result<Self> {
        let d = v.d();
        if (v.s() as f64) * beta * beta >= 1.0 {
            return Err(Error::Singularity(format!("s·β² = {} must be < 1", v.s() as f64 * beta * beta)));
        }
        let vf = v.to_f64();
        let m = DMatrix::from_fn(d, d, |i, j| f64::from(u8::from(i == j)) - beta * beta * vf[i] * vf[j]);
        let sigma = Covariance::dense(m)?;
        let mu1 = vf.iter().map(|x| -beta * x).collect();
        let mu2 = vf.iter().map(|x| beta * x).collect();
        Self::new(0.5, mu1, mu2, sigma)
    }

    pub fn d(&self) -> usize {
        self.sigma.dim()
    }

    pub fn delta_mu(&self) -> Vec<f64> {
        self.mu2.iter().zip(&self.mu1).map(|(a, b)| a - b).collect()
    }

    /// ‖Δμ‖₀.
    pub fn s(&self) -> usize {
        self.delta_mu().iter().filter(|x| **x != 0.0).count()
    }

    pub fn is_null(&self) -> bool {
        self.mu1 == self.mu2
    }

    /// Overall mean `νμ₁ + (1−ν)μ₂`.
    pub fn mean(&self) -> Vec<f64> {
        self.mu1.iter().zip(&self.mu2).map(|(a, b)| self.nu * a + (1.0 - self.nu) * b).collect()
    }

    pub fn signal_strength(&self, kind: SignalKind) -> Result<SignalStrength> {
        let dm = SparseDirection::from_dense(&self.delta_mu());
        let value = match kind {
            SignalKind::GmmKnownCov => self.sigma.inv_quad(&dm),
            SignalKind::GmmUnknownCov => {
                let l2: f64 = dm.w.iter().map(|x| x * x).sum();
                if l2 == 0.0 {
                    0.0
                } else {
                    l2 * l2 / self.sigma.quad(&dm)
                }
            }
            SignalKind::Regression => return Err(domain("regression signal strength on a GMM instance")),
        };
        Ok(SignalStrength { value, kind })
    }

    /// Law of `wᵀX`: a two-component mixture of normals.
    pub fn projection(&self, w: &SparseDirection) -> [Component; 2] {
        let sd = self.sigma.quad(w).sqrt();
        [
            Component { weight: self.nu, mean: w.dot(&self.mu1), sd },
            Component { weight: 1.0 - self.nu, mean: w.dot(&self.mu2), sd },
        ]
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Dataset {
        let d = self.d();
        let mut cols = vec![0.0; n * d];
        let mut z = vec![0.0; d];
        let null = self.is_null();
        for i in 0..n {
            for zj in z.iter_mut() {
                *zj = rng.sample(StandardNormal);
            }
            self.sigma.color(&mut z);
            let mu = if null || rng.random::<f64>() < self.nu { &self.mu1 } else { &self.mu2 };
            for j in 0..d {
                cols[j * n + i] = mu[j] + z[j];
            }
        }
        Dataset::from_columns(n, d, cols).expect("consistent shape")
    }
}
