//! SQ detection tests, thresholds and null calibration.

pub mod gmm;
pub mod net;
pub mod reductions;
pub mod reg;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exec::{stream_id, stream_rng, Exec};
use crate::models::Instance;
use crate::oracles::HonestOracle;
use crate::sq::{run_algorithm, Oracle, OracleConfig, Session, SqAlgorithm, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    Formula,
    Calibrated,
}

/// A transcript-based test `1{statistic ≥ threshold}`.
pub trait Detector: Send + Sync {
    fn name(&self) -> &'static str;

    /// Declared query budget T.
    fn budget(&self) -> usize;

    /// Capacity η of the query class, `log` of its size.
    fn capacity(&self) -> f64;

    fn issue(&self, session: &mut Session<'_>) -> Result<()>;

    /// Test statistic from the transcript alone.
    fn statistic(&self, transcript: &Transcript) -> Result<f64>;

    fn threshold(&self) -> f64;

    fn set_threshold(&mut self, threshold: f64, mode: ThresholdMode);

    fn decide(&self, transcript: &Transcript) -> Result<bool> {
        Ok(self.statistic(transcript)? >= self.threshold())
    }

    fn oracle_config(&self, xi: f64, n: usize) -> Result<OracleConfig> {
        OracleConfig::new(xi, n, self.budget(), self.capacity())
    }
}

/// Adapter running a detector as an SQ algorithm; the output is the statistic.
pub struct Statistic<'a, D: ?Sized>(pub &'a D);

impl<D: Detector + ?Sized> SqAlgorithm for Statistic<'_, D> {
    type Output = f64;

    fn execute(&self, session: &mut Session<'_>) -> Result<f64> {
        self.0.issue(session)?;
        self.0.statistic(session.transcript())
    }
}

/// Adapter whose output is the test decision.
pub struct Decision<'a, D: ?Sized>(pub &'a D);

impl<D: Detector + ?Sized> SqAlgorithm for Decision<'_, D> {
    type Output = bool;

    fn execute(&self, session: &mut Session<'_>) -> Result<bool> {
        self.0.issue(session)?;
        self.0.decide(session.transcript())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorRun {
    pub statistic: f64,
    pub reject: bool,
    pub transcript: Transcript,
}

pub fn run_detector<D: Detector + ?Sized>(detector: &D, oracle: &mut dyn Oracle, config: &OracleConfig) -> Result<DetectorRun> {
    let run = run_algorithm(&Statistic(detector), oracle, config)?;
    Ok(DetectorRun { statistic: run.output, reject: run.output >= detector.threshold(), transcript: run.transcript })
}

/// Maximum response over the entries whose ids are `ids`, which must appear
/// contiguously starting at `offset`.
pub(crate) fn sup_over(transcript: &Transcript, ids: &[Arc<str>], offset: usize) -> Result<f64> {
    let entries = transcript.entries();
    if entries.len() < offset + ids.len() {
        return Err(Error::IncompleteTranscript(format!(
            "expected {} entries, found {}",
            offset + ids.len(),
            entries.len()
        )));
    }
    let mut best = f64::NEG_INFINITY;
    for (e, id) in entries[offset..offset + ids.len()].iter().zip(ids) {
        if !Arc::ptr_eq(&e.id, id) && e.id != *id {
            return Err(Error::IncompleteTranscript(format!("expected query {id}, found {}", e.id)));
        }
        if e.response > best {
            best = e.response;
        }
    }
    Ok(best)
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// The order statistic at rank `ceil(level · m)` (1-based) of `values`.
pub fn empirical_quantile(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(domain(format!("quantile level must lie in (0,1], got {level}")));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let k = ((level * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Ok(v[k - 1])
}

/// Statistics of `detector` over `trials` fresh datasets of size `n` drawn from
/// `instance`, answered by the honest oracle. Trial `t` uses stream
/// `stream_id([tag, t])` under `seed`.
pub fn simulate_statistics<D: Detector + ?Sized>(
    detector: &D,
    instance: &Instance,
    n: usize,
    trials: usize,
    seed: u64,
    tag: u64,
    exec: Exec,
) -> Result<Vec<f64>> {
    let config = detector.oracle_config(0.5, n)?;
    let inner = if exec.is_parallel() && trials > 1 { Exec::Sequential } else { exec };
    exec.try_map(trials, |t| {
        let mut rng = stream_rng(seed, stream_id(&[tag, t as u64]));
        let data = instance.sample(n, &mut rng);
        let mut oracle = HonestOracle::new(&data).with_exec(inner);
        Ok(run_detector(detector, &mut oracle, &config)?.statistic)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub threshold: f64,
    pub statistics: Vec<f64>,
}

pub const CALIBRATION_TAG: u64 = 0xca1;

/// Empirical `(1 − ξ)`-quantile of the null statistic over `trials` honest runs.
pub fn calibrate_threshold<D: Detector + ?Sized>(
    detector: &D,
    null: &Instance,
    n: usize,
    xi: f64,
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<Calibration> {
    if trials < 100 {
        return Err(domain(format!("calibration needs at least 100 trials, got {trials}")));
    }
    if !(xi > 0.0 && xi < 1.0) {
        return Err(domain(format!("xi must lie in (0,1), got {xi}")));
    }
    let statistics = simulate_statistics(detector, null, n, trials, seed, CALIBRATION_TAG, exec)?;
    let threshold = empirical_quantile(&statistics, 1.0 - xi)?;
    Ok(Calibration { threshold, statistics })
}
