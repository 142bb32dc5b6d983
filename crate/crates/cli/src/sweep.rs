//! Empirical risk over a grid of signal strengths.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;
use sqlab_core::detectors::{calibrate_threshold, run_detector, Detector, ThresholdMode};
use sqlab_core::exec::{stream_id, stream_rng, Exec};
use sqlab_core::models::Instance;
use sqlab_core::oracles::{AdversarialOracle, HonestOracle};
use sqlab_core::sq::{Oracle, OracleConfig};

use crate::config::{DetectorKind, ExperimentConfig, OracleKind};
use crate::setup::{build_detector, Model};
use crate::{exec_for, CliError};

const SWEEP_TAG: u64 = 0x5eed;

/// One CSV row. Column order is part of the output format.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskRow {
    pub model: &'static str,
    pub detector: &'static str,
    pub oracle: &'static str,
    pub d: usize,
    pub s: usize,
    pub n: usize,
    pub nu: f64,
    pub sigma: String,
    pub gamma: f64,
    pub xi: f64,
    pub threshold_mode: &'static str,
    pub trials: usize,
    pub seed: u64,
    pub type1: f64,
    pub type2: f64,
    pub risk: f64,
    pub wall_ms: u64,
    #[serde(skip)]
    pub threshold: f64,
    /// Queries answered per trial.
    #[serde(skip)]
    pub budget_used: usize,
}

/// Outcome of one trial: rejection and the number of answered queries.
fn trial(detector: &dyn Detector, oracle: &mut dyn Oracle, config: &OracleConfig) -> Result<(bool, usize), CliError> {
    let run = run_detector(detector, oracle, config)?;
    let used = run.transcript.budget_used();
    if used != detector.budget() {
        return Err(CliError::Core(sqlab_core::Error::IncompleteTranscript(format!(
            "{} answered {used} queries, declared budget {}",
            detector.name(),
            detector.budget()
        ))));
    }
    Ok((run.reject, used))
}

struct Arm<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a Model,
    detector: &'a dyn Detector,
    config: OracleConfig,
    exec: Exec,
}

impl Arm<'_> {
    /// Trial `t` at grid index `g` draws data from stream `[tag, g, hypothesis, t]`
    /// and the alternative direction from `[tag, g, 2, t]`, so every detector sees
    /// the same datasets.
    fn rejections(&self, g: usize, gamma: f64, alternative: bool) -> Result<(usize, usize), CliError> {
        let (cfg, model) = (self.cfg, self.model);
        let null = model.null(gamma)?;
        let h = u64::from(alternative);
        let instance = |t: usize| -> Result<Instance, CliError> {
            if !alternative {
                return Ok(null.clone());
            }
            let mut rng = stream_rng(cfg.seed, stream_id(&[SWEEP_TAG, g as u64, 2, t as u64]));
            let v = Model::random_direction(cfg, &mut rng)?;
            model.alternative(gamma, &v)
        };
        let inner = if self.exec.is_parallel() { Exec::Sequential } else { self.exec };
        let outcomes: Vec<(bool, usize)> = match cfg.oracle {
            OracleKind::Honest => self.exec.try_map(cfg.trials, |t| {
                let inst = instance(t)?;
                let mut rng = stream_rng(cfg.seed, stream_id(&[SWEEP_TAG, g as u64, h, t as u64]));
                let data = inst.sample(cfg.n, &mut rng);
                trial(self.detector, &mut HonestOracle::new(&data).with_exec(inner), &self.config)
            })?,
            // Answers are deterministic, so the null needs a single run.
            OracleKind::Adversarial if !alternative => {
                let mut o = AdversarialOracle::new(null.clone(), null.clone(), self.config).with_exec(self.exec);
                vec![trial(self.detector, &mut o, &self.config)?; cfg.trials]
            }
            OracleKind::Adversarial => self.exec.try_map(cfg.trials, |t| {
                let mut o = AdversarialOracle::new(null.clone(), instance(t)?, self.config).with_exec(inner);
                trial(self.detector, &mut o, &self.config)
            })?,
        };
        let used = outcomes.first().map_or(0, |o| o.1);
        Ok((outcomes.iter().filter(|o| o.0).count(), used))
    }
}

pub(crate) fn calibration_seed(cfg: &ExperimentConfig, g: usize) -> u64 {
    stream_id(&[SWEEP_TAG, cfg.seed, g as u64])
}

/// Runs every (γ, detector) pair; rows are ordered by γ, then detector.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<RiskRow>, CliError> {
    cfg.validate()?;
    if cfg.gamma_grid.is_empty() {
        return Err(CliError::usage("gamma_grid is empty"));
    }
    let model = Model::from_config(cfg)?;
    let exec = exec_for(cfg.threads);
    let kinds = cfg.detectors();
    let mut built = kinds.iter().map(|&k| build_detector(cfg, k)).collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for (g, &gamma) in cfg.gamma_grid.iter().enumerate() {
        for (kind, b) in kinds.iter().zip(built.iter_mut()) {
            let start = Instant::now();
            let recalibrate = g == 0 || model.null_depends_on_gamma();
            if cfg.threshold_mode == ThresholdMode::Calibrated && recalibrate {
                let det = b.detector();
                let null = model.null(gamma)?;
                let cal = calibrate_threshold(det, &null, cfg.n, cfg.xi, cfg.calibration_trials, calibration_seed(cfg, g), exec)?;
                b.detector_mut().set_threshold(cal.threshold, ThresholdMode::Calibrated);
            }
            let det = b.detector();
            let arm = Arm { cfg, model: &model, detector: det, config: det.oracle_config(cfg.xi, cfg.n)?, exec };
            let (rej0, used) = arm.rejections(g, gamma, false)?;
            let (rej1, _) = arm.rejections(g, gamma, true)?;
            let trials = cfg.trials as f64;
            let (type1, type2) = (rej0 as f64 / trials, (cfg.trials - rej1) as f64 / trials);
            rows.push(RiskRow {
                model: model_name(cfg),
                detector: kind.as_str(),
                oracle: match cfg.oracle {
                    OracleKind::Honest => "honest",
                    OracleKind::Adversarial => "adversarial",
                },
                d: cfg.d,
                s: cfg.s,
                n: cfg.n,
                nu: cfg.nu,
                sigma: cfg.sigma.to_string(),
                gamma,
                xi: cfg.xi,
                threshold_mode: match cfg.threshold_mode {
                    ThresholdMode::Formula => "formula",
                    ThresholdMode::Calibrated => "calibrated",
                },
                trials: cfg.trials,
                seed: cfg.seed,
                type1,
                type2,
                risk: type1 + type2,
                wall_ms: if cfg.timing { start.elapsed().as_millis() as u64 } else { 0 },
                threshold: det.threshold(),
                budget_used: used,
            });
        }
    }
    Ok(rows)
}

fn model_name(cfg: &ExperimentConfig) -> &'static str {
    match cfg.model {
        crate::ModelKind::Gmm => "gmm",
        crate::ModelKind::Reg => "reg",
    }
}

pub fn write_csv<W: Write>(rows: &[RiskRow], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Smallest grid γ whose power (1 − type II) reaches `level`.
pub fn first_powerful(rows: &[RiskRow], detector: DetectorKind, level: f64) -> Option<f64> {
    rows.iter().filter(|r| r.detector == detector.as_str()).find(|r| 1.0 - r.type2 >= level).map(|r| r.gamma)
}

/// Number of adjacent grid pairs where power drops.
pub fn monotonicity_violations(rows: &[RiskRow], detector: DetectorKind) -> usize {
    let power: Vec<f64> = rows.iter().filter(|r| r.detector == detector.as_str()).map(|r| 1.0 - r.type2).collect();
    power.windows(2).filter(|w| w[1] < w[0]).count()
}
