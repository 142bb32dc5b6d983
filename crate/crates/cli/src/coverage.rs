//! Coverage certificates for a single detector at a single signal strength.

use sqlab_core::detectors::Statistic;
use sqlab_core::models::{enum_cap, enumerate_gs};
use sqlab_core::oracles::{coverage_certificate, CoverageCertificate, GmmFamily, HypothesisFamily, RegFamily};

use crate::config::ExperimentConfig;
use crate::setup::build_detector;
use crate::{exec_for, CliError, ModelKind};

/// Builds the detector, runs it against the adversarial oracle and searches G(s)
/// in enumeration order for an uncovered alternative. The amplitude is
/// `β = sqrt(γ/s)` (mixture) or `σ sqrt(γ/s)` (regression).
pub fn run_coverage(cfg: &ExperimentConfig) -> Result<CoverageCertificate, CliError> {
    cfg.validate()?;
    let [gamma] = cfg.gamma_grid[..] else {
        return Err(CliError::usage("coverage needs exactly one value in gamma_grid"));
    };
    let [kind] = cfg.detectors()[..] else {
        return Err(CliError::usage("coverage needs exactly one detector"));
    };
    let built = build_detector(cfg, kind)?;
    let det = built.detector();
    let scale = (gamma / cfg.s as f64).sqrt();
    let family: Box<dyn HypothesisFamily> = match cfg.model {
        ModelKind::Gmm => Box::new(GmmFamily { beta: scale, nu: cfg.nu, sigma: cfg.sigma.covariance(cfg.d)? }),
        ModelKind::Reg => {
            let sigma = cfg.sigma.noise()?;
            Box::new(RegFamily { beta: sigma * scale, sigma, d: cfg.d, s: cfg.s })
        }
    };
    let alts = enumerate_gs(cfg.d, cfg.s, enum_cap())?;
    let config = det.oracle_config(cfg.xi, cfg.n)?;
    Ok(coverage_certificate(&Statistic(det), &alts, family.as_ref(), &config, None, exec_for(cfg.threads))?)
}

/// Exit status of a certificate: witness with identical transcripts or not.
pub fn certificate_status(cert: &CoverageCertificate) -> Result<(), CliError> {
    if cert.witness.is_some() && cert.transcripts_identical {
        Ok(())
    } else {
        Err(CliError::Negative(format!("no witness: {} of {} alternatives covered", cert.union_size, cert.gs_size)))
    }
}
