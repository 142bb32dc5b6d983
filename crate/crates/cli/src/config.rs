//! Experiment configuration: one JSON document, validated up front.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sqlab_core::detectors::ThresholdMode;
use sqlab_core::models::Covariance;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Gmm,
    Reg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Honest,
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Exhaustive,
    Diagonal,
    Net,
    Coordinate,
}

impl DetectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Exhaustive => "exhaustive",
            DetectorKind::Diagonal => "diagonal",
            DetectorKind::Net => "net",
            DetectorKind::Coordinate => "coordinate",
        }
    }
}

/// One detector or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DetectorList {
    One(DetectorKind),
    Many(Vec<DetectorKind>),
}

impl DetectorList {
    pub fn to_vec(&self) -> Vec<DetectorKind> {
        match self {
            DetectorList::One(k) => vec![*k],
            DetectorList::Many(v) => v.clone(),
        }
    }
}

/// Covariance for the mixture model, noise level for regression.
///
/// - a number: the regression noise σ, or `c·I` for the mixture;
/// - `"identity"`;
/// - `{"diagonal": [..]}` or `{"dense": [[..], ..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Scalar(f64),
    Named(String),
    Diagonal { diagonal: Vec<f64> },
    Dense { dense: Vec<Vec<f64>> },
}

impl Default for SigmaSpec {
    fn default() -> Self {
        SigmaSpec::Named("identity".into())
    }
}

impl fmt::Display for SigmaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaSpec::Scalar(v) => write!(f, "{v}"),
            SigmaSpec::Named(s) => f.write_str(s),
            SigmaSpec::Diagonal { .. } => f.write_str("diagonal"),
            SigmaSpec::Dense { .. } => f.write_str("dense"),
        }
    }
}

impl SigmaSpec {
    pub fn covariance(&self, d: usize) -> Result<Covariance, CliError> {
        let cov = match self {
            SigmaSpec::Named(s) if s == "identity" => Ok(Covariance::identity(d)),
            SigmaSpec::Named(s) => return Err(CliError::usage(format!("unknown covariance {s:?}"))),
            SigmaSpec::Scalar(c) => Covariance::diagonal(vec![*c; d]),
            SigmaSpec::Diagonal { diagonal } => {
                if diagonal.len() != d {
                    return Err(CliError::usage(format!("diagonal has {} entries, d = {d}", diagonal.len())));
                }
                Covariance::diagonal(diagonal.clone())
            }
            SigmaSpec::Dense { dense } => {
                if dense.len() != d || dense.iter().any(|r| r.len() != d) {
                    return Err(CliError::usage(format!("dense covariance must be {d} x {d}")));
                }
                Covariance::dense(DMatrix::from_fn(d, d, |i, j| dense[i][j]))
            }
        };
        cov.map_err(|e| CliError::usage(e.to_string()))
    }

    /// Regression noise level.
    pub fn noise(&self) -> Result<f64, CliError> {
        match self {
            SigmaSpec::Scalar(v) if *v > 0.0 && v.is_finite() => Ok(*v),
            SigmaSpec::Named(s) if s == "identity" => Ok(1.0),
            other => Err(CliError::usage(format!("regression sigma must be a positive number, got {other}"))),
        }
    }
}

/// Settings for `demo-sgd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    /// Defaults to `3 sqrt(log d / n)`.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub refit_iterations: usize,
    /// Magnitude of the nonzero coefficients of θ*.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_demo_tolerance")]
    pub tolerance: f64,
}

fn default_step() -> f64 {
    0.5
}
fn default_iterations() -> usize {
    200
}
fn default_amplitude() -> f64 {
    1.0
}
fn default_demo_tolerance() -> f64 {
    1e-12
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            lambda: None,
            step: default_step(),
            iterations: default_iterations(),
            refit_iterations: 0,
            amplitude: default_amplitude(),
            tolerance: default_demo_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub d: usize,
    pub s: usize,
    pub n: usize,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default)]
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub gamma_grid: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_oracle")]
    pub oracle: OracleKind,
    #[serde(default = "default_detector")]
    pub detector: DetectorList,
    #[serde(default = "default_threshold_mode")]
    pub threshold_mode: ThresholdMode,
    #[serde(default = "default_calibration_trials")]
    pub calibration_trials: usize,
    #[serde(default = "default_xi")]
    pub xi: f64,
    /// Truncation constant; model default when absent.
    #[serde(default, rename = "R")]
    pub r: Option<f64>,
    /// Covering radius for the net detector.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Record wall-clock time; off gives byte-identical output.
    #[serde(default = "default_timing")]
    pub timing: bool,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub demo: DemoConfig,
}

fn default_nu() -> f64 {
    0.5
}
fn default_trials() -> usize {
    200
}
fn default_oracle() -> OracleKind {
    OracleKind::Honest
}
fn default_detector() -> DetectorList {
    DetectorList::One(DetectorKind::Diagonal)
}
fn default_threshold_mode() -> ThresholdMode {
    ThresholdMode::Calibrated
}
fn default_calibration_trials() -> usize {
    2000
}
fn default_xi() -> f64 {
    0.05
}
fn default_delta() -> f64 {
    0.5
}
fn default_timing() -> bool {
    true
}

/// Values given on the command line; they replace the matching top-level keys.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(t) = o.threads {
            self.threads = Some(t);
        }
    }

    pub fn detectors(&self) -> Vec<DetectorKind> {
        let mut v = self.detector.to_vec();
        v.sort();
        v.dedup();
        v
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::usage(m));
        if self.d == 0 || self.s == 0 || self.s > self.d {
            return bad(format!("need 1 <= s <= d, got s = {}, d = {}", self.s, self.d));
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return bad(format!("nu must lie in (0,1), got {}", self.nu));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return bad(format!("xi must lie in (0,1), got {}", self.xi));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.gamma_grid.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return bad("gamma_grid entries must be finite and nonnegative".into());
        }
        if self.gamma_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("gamma_grid must be strictly increasing".into());
        }
        if let Some(r) = self.r {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("R must be positive, got {r}"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0,1), got {}", self.delta));
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        let dets = self.detector.to_vec();
        if dets.is_empty() {
            return bad("detector list is empty".into());
        }
        for k in dets {
            let ok = match self.model {
                ModelKind::Gmm => k != DetectorKind::Coordinate,
                ModelKind::Reg => matches!(k, DetectorKind::Exhaustive | DetectorKind::Coordinate),
            };
            if !ok {
                return bad(format!("detector {} is not available for model {:?}", k.as_str(), self.model));
            }
        }
        match self.model {
            ModelKind::Gmm => {
                self.sigma.covariance(self.d)?;
            }
            ModelKind::Reg => {
                self.sigma.noise()?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{"model": "gmm", "d": 10, "s": 2, "n": 500, "gamma_grid": [0.5, 1.0]}"#;

    #[test]
    fn defaults_and_overrides() {
        let mut c = ExperimentConfig::from_json(BASE).unwrap();
        assert_eq!(c.trials, 200);
        assert_eq!(c.xi, 0.05);
        assert_eq!(c.detectors(), vec![DetectorKind::Diagonal]);
        c.apply(Overrides { seed: Some(9), threads: Some(2) });
        assert_eq!((c.seed, c.threads), (9, Some(2)));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        let e = ExperimentConfig::from_json(r#"{"model": "gmm", "d": 10, "s": 2, "n": 500, "gama_grid": []}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let mut c = ExperimentConfig::from_json(BASE).unwrap();
        c.gamma_grid = vec![1.0, 0.5];
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        c.gamma_grid = vec![0.5];
        c.detector = DetectorList::One(DetectorKind::Coordinate);
        assert!(c.validate().is_err());
    }

    #[test]
    fn sigma_forms() {
        let c: ExperimentConfig = serde_json::from_str(
            r#"{"model": "gmm", "d": 2, "s": 1, "n": 50, "sigma": {"dense": [[2.0, 0.5], [0.5, 1.0]]}, "detector": ["net", "exhaustive"]}"#,
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.detectors(), vec![DetectorKind::Exhaustive, DetectorKind::Net]);
        assert_eq!(c.sigma.to_string(), "dense");
        assert_eq!(SigmaSpec::Scalar(2.0).noise().unwrap(), 2.0);
        assert!(SigmaSpec::Named("other".into()).covariance(3).is_err());
    }
}
