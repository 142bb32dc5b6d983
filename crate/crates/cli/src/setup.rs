//! Detector and hypothesis construction from a configuration.

use rand::Rng;
use serde::Serialize;
use sqlab_core::detectors::gmm::{DiagonalDetector, ExhaustiveDetector, TestSpec, DEFAULT_R};
use sqlab_core::detectors::net::{covering_net, TwoStageDetector};
use sqlab_core::detectors::reg::{RegDetector, RegFamilyKind, RegTestSpec};
use sqlab_core::detectors::Detector;
use sqlab_core::models::{enum_cap, Covariance, GmmParams, Instance, RegParams, SignSupportVector};

use crate::config::{DetectorKind, ExperimentConfig, ModelKind};
use crate::CliError;

/// A detector together with its serialisable description.
pub enum Built {
    Exhaustive(ExhaustiveDetector),
    Diagonal(DiagonalDetector),
    Net(TwoStageDetector),
    Reg(RegDetector),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Spec {
    Gmm(TestSpec),
    Reg(RegTestSpec),
}

impl Built {
    pub fn detector(&self) -> &dyn Detector {
        match self {
            Built::Exhaustive(d) => d,
            Built::Diagonal(d) => d,
            Built::Net(d) => d,
            Built::Reg(d) => d,
        }
    }

    pub fn detector_mut(&mut self) -> &mut dyn Detector {
        match self {
            Built::Exhaustive(d) => d,
            Built::Diagonal(d) => d,
            Built::Net(d) => d,
            Built::Reg(d) => d,
        }
    }

    pub fn spec(&self) -> Spec {
        match self {
            Built::Exhaustive(d) => Spec::Gmm(d.spec().clone()),
            Built::Diagonal(d) => Spec::Gmm(d.spec().clone()),
            Built::Net(d) => Spec::Gmm(d.spec().clone()),
            Built::Reg(d) => Spec::Reg(d.spec().clone()),
        }
    }
}

/// Hypotheses of a configuration.
#[derive(Debug, Clone)]
pub enum Model {
    Gmm { sigma: Covariance, nu: f64 },
    Reg { sigma: f64, d: usize, s: usize },
}

impl Model {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        Ok(match cfg.model {
            ModelKind::Gmm => Model::Gmm { sigma: cfg.sigma.covariance(cfg.d)?, nu: cfg.nu },
            ModelKind::Reg => Model::Reg { sigma: cfg.sigma.noise()?, d: cfg.d, s: cfg.s },
        })
    }

    /// Amplitude β giving signal strength `gamma` along `v`: `β² vᵀΣ⁻¹v = γ` for the
    /// mixture, `sβ²/σ² = γ` for regression.
    pub fn beta(&self, gamma: f64, v: &SignSupportVector) -> f64 {
        match self {
            Model::Gmm { sigma, .. } => {
                let dir = sqlab_core::sq::SparseDirection::from_dense(&v.to_f64());
                (gamma / sigma.inv_quad(&dir)).sqrt()
            }
            Model::Reg { sigma, s, .. } => sigma * (gamma / *s as f64).sqrt(),
        }
    }

    /// The null at signal strength `gamma`. Only the regression null depends on
    /// it, through the matched response variance `σ² + sβ²`.
    pub fn null(&self, gamma: f64) -> Result<Instance, CliError> {
        Ok(match self {
            Model::Gmm { sigma, .. } => Instance::Gmm(GmmParams::null(sigma.clone())),
            Model::Reg { sigma, d, s } => {
                let support: Vec<usize> = (0..*s).collect();
                let v = SignSupportVector::from_support(*d, &support, &vec![1; *s])?;
                Instance::Reg(RegParams::null(self.beta(gamma, &v), v, *sigma)?)
            }
        })
    }

    pub fn alternative(&self, gamma: f64, v: &SignSupportVector) -> Result<Instance, CliError> {
        let beta = self.beta(gamma, v);
        Ok(match self {
            Model::Gmm { sigma, nu } => Instance::Gmm(GmmParams::sparse_alternative(v, beta, *nu, sigma.clone())?),
            Model::Reg { sigma, .. } => Instance::Reg(RegParams::alternative(beta, v.clone(), *sigma)?),
        })
    }

    /// Whether the null changes with `gamma`.
    pub fn null_depends_on_gamma(&self) -> bool {
        matches!(self, Model::Reg { .. })
    }

    pub fn random_direction<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> Result<SignSupportVector, CliError> {
        Ok(SignSupportVector::random(cfg.d, cfg.s, rng)?)
    }
}

pub fn build_detector(cfg: &ExperimentConfig, kind: DetectorKind) -> Result<Built, CliError> {
    let cap = enum_cap();
    Ok(match cfg.model {
        ModelKind::Gmm => {
            let sigma = cfg.sigma.covariance(cfg.d)?;
            let r = cfg.r.unwrap_or(DEFAULT_R);
            match kind {
                DetectorKind::Exhaustive => Built::Exhaustive(ExhaustiveDetector::new(cfg.s, &sigma, r, cfg.n, cfg.xi, cap)?),
                DetectorKind::Diagonal => Built::Diagonal(DiagonalDetector::new(&sigma, cfg.s, r, cfg.n, cfg.xi)?),
                DetectorKind::Net => {
                    let net = covering_net(cfg.delta, &sigma, cfg.s, cap)?;
                    Built::Net(TwoStageDetector::net(&net, r, cfg.n, cfg.xi)?)
                }
                DetectorKind::Coordinate => return Err(CliError::usage("the coordinate detector is for regression")),
            }
        }
        ModelKind::Reg => {
            let family = match kind {
                DetectorKind::Exhaustive => RegFamilyKind::Exhaustive,
                DetectorKind::Coordinate => RegFamilyKind::Coordinate,
                other => return Err(CliError::usage(format!("the {} detector is for the mixture model", other.as_str()))),
            };
            Built::Reg(RegDetector::new(family, cfg.d, cfg.s, cfg.sigma.noise()?, cfg.r, cfg.n, cfg.xi, cap)?)
        }
    })
}
