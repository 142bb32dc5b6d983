//! Monte Carlo thresholds under the null, reported as detector specifications.

use serde::Serialize;
use sqlab_core::detectors::{calibrate_threshold, ThresholdMode};

use crate::config::ExperimentConfig;
use crate::setup::{build_detector, Model, Spec};
use crate::sweep::calibration_seed;
use crate::{exec_for, CliError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRecord {
    pub detector: &'static str,
    /// Present for regression, whose null depends on the signal strength.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub trials: usize,
    pub spec: Spec,
}

/// One record per detector, or per (γ, detector) for regression. Seeds match the
/// ones `sweep` uses, so the thresholds agree with a calibrated sweep.
pub fn run_calibrate(cfg: &ExperimentConfig) -> Result<Vec<CalibrationRecord>, CliError> {
    cfg.validate()?;
    let model = Model::from_config(cfg)?;
    let grid: Vec<Option<f64>> = if model.null_depends_on_gamma() {
        if cfg.gamma_grid.is_empty() {
            return Err(CliError::usage("regression calibration needs gamma_grid"));
        }
        cfg.gamma_grid.iter().map(|&g| Some(g)).collect()
    } else {
        vec![None]
    };
    let mut records = Vec::new();
    for (g, gamma) in grid.into_iter().enumerate() {
        let null = model.null(gamma.unwrap_or(0.0))?;
        for kind in cfg.detectors() {
            let mut built = build_detector(cfg, kind)?;
            let seed = calibration_seed(cfg, g);
            let cal = calibrate_threshold(built.detector(), &null, cfg.n, cfg.xi, cfg.calibration_trials, seed, exec_for(cfg.threads))?;
            built.detector_mut().set_threshold(cal.threshold, ThresholdMode::Calibrated);
            records.push(CalibrationRecord { detector: kind.as_str(), gamma, trials: cfg.calibration_trials, spec: built.spec() });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::run_sweep;

    #[test]
    fn agrees_with_calibrated_sweep() {
        let json = r#"{"model": "gmm", "d": 6, "s": 2, "n": 200, "gamma_grid": [1.0], "trials": 10,
                       "calibration_trials": 200, "threshold_mode": "calibrated", "detector": "diagonal"}"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        let recs = run_calibrate(&cfg).unwrap();
        let rows = run_sweep(&cfg).unwrap();
        let Spec::Gmm(spec) = &recs[0].spec else { panic!("expected a mixture spec") };
        assert_eq!(spec.threshold, rows[0].threshold);
        assert!(serde_json::to_string(&recs).unwrap().contains("\"detector\":\"diagonal\""));
    }

    #[test]
    fn regression_needs_grid() {
        let cfg = ExperimentConfig::from_json(r#"{"model": "reg", "d": 6, "s": 2, "n": 200, "sigma": 1.0, "detector": "coordinate"}"#).unwrap();
        assert_eq!(run_calibrate(&cfg).unwrap_err().exit_code(), 2);
    }
}
