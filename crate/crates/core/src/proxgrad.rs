//! Lasso by proximal gradient, with the gradient read coordinate-wise through
//! `∂ⱼ ½(y − θᵀx)²` queries.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::models::SignSupportVector;
use crate::sq::{BoundedQuery, Dataset, FamilyTag, Oracle, QueryKernel, Session, SqAlgorithm};

/// Clipping bound for gradient queries.
pub const GRADIENT_BOUND: f64 = 1e3;

/// Consecutive objective increases tolerated before the run is declared divergent.
pub const DIVERGENCE_PATIENCE: usize = 10;

/// Divergence is also declared once the objective exceeds this multiple of its
/// starting value. Clipped gradients can otherwise keep a blown-up iterate
/// oscillating forever.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

/// `3 √(ln d / n)`.
pub fn default_lambda(d: usize, n: usize) -> f64 {
    3.0 * ((d as f64).ln() / n as f64).sqrt()
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxGradConfig {
    pub lambda: f64,
    pub step: f64,
    /// Proximal iterations T′.
    pub iterations: usize,
    /// Unpenalised gradient steps on the selected support afterwards.
    #[serde(default)]
    pub refit_iterations: usize,
    /// Slack on an objective increase before it counts towards divergence.
    #[serde(default)]
    pub tolerance: f64,
}

impl ProxGradConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(domain(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(domain(format!("step must be positive, got {}", self.step)));
        }
        if !(self.tolerance >= 0.0) {
            return Err(domain(format!("tolerance must be >= 0, got {}", self.tolerance)));
        }
        Ok(())
    }

    /// Worst-case number of queries for dimension `d`.
    pub fn budget(&self, d: usize) -> usize {
        d * (self.iterations + self.refit_iterations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Start,
    Prox,
    Refit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub phase: Phase,
    /// Penalised objective in the prox phase, plain loss in the refit phase.
    pub objective: f64,
    pub nonzeros: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxGradOutput {
    pub lasso: Vec<f64>,
    /// Equals `lasso` when no refit was requested.
    pub theta: Vec<f64>,
    pub trace: Vec<TracePoint>,
}

/// Objective used for tracing and divergence checks. It sits outside the query
/// budget.
pub type Monitor<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

pub struct ProxGradient<'a> {
    pub d: usize,
    pub config: ProxGradConfig,
    pub monitor: Option<Monitor<'a>>,
}

impl<'a> ProxGradient<'a> {
    pub fn new(d: usize, config: ProxGradConfig) -> Result<Self> {
        config.validate()?;
        Ok(ProxGradient { d, config, monitor: None })
    }

    pub fn with_monitor(mut self, monitor: Monitor<'a>) -> Self {
        self.monitor = Some(monitor);
        self
    }

    fn gradient(&self, session: &mut Session<'_>, theta: &[f64], coords: &[usize], label: &str) -> Result<Vec<f64>> {
        let shared = Arc::new(theta.to_vec());
        let queries = coords
            .iter()
            .map(|&j| {
                let kernel = QueryKernel::SqGradient { theta: shared.clone(), j };
                BoundedQuery::new(format!("{label}:{j}"), GRADIENT_BOUND, FamilyTag::SqGradient, kernel)
            })
            .collect::<Result<Vec<_>>>()?;
        session.ask_all(&queries)
    }
}

struct Watch<'m> {
    monitor: Option<Monitor<'m>>,
    tolerance: f64,
    last: f64,
    rising: usize,
    start: Option<f64>,
}

impl Watch<'_> {
    fn record(&mut self, trace: &mut Vec<TracePoint>, iteration: usize, phase: Phase, theta: &[f64], penalty: f64) -> Result<()> {
        let Some(f) = self.monitor else { return Ok(()) };
        let objective = f(theta) + penalty;
        if !objective.is_finite() {
            return Err(Error::Divergence(format!("objective is {objective} at iteration {iteration}")));
        }
        let start = *self.start.get_or_insert(objective);
        if objective > DIVERGENCE_FACTOR * start.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence(format!("objective {objective:.6e} at iteration {iteration} is over {DIVERGENCE_FACTOR} times its start")));
        }
        if phase != Phase::Start && objective > self.last + self.tolerance {
            self.rising += 1;
            if self.rising >= DIVERGENCE_PATIENCE {
                return Err(Error::Divergence(format!(
                    "objective increased for {DIVERGENCE_PATIENCE} consecutive iterations (now {objective:.6e})"
                )));
            }
        } else {
            self.rising = 0;
        }
        self.last = objective;
        let nonzeros = theta.iter().filter(|v| **v != 0.0).count();
        trace.push(TracePoint { iteration, phase, objective, nonzeros });
        Ok(())
    }
}

impl SqAlgorithm for ProxGradient<'_> {
    type Output = ProxGradOutput;

    fn execute(&self, session: &mut Session<'_>) -> Result<ProxGradOutput> {
        let (d, cfg) = (self.d, self.config);
        let l1 = |t: &[f64]| cfg.lambda * t.iter().map(|v| v.abs()).sum::<f64>();
        let mut watch = Watch { monitor: self.monitor, tolerance: cfg.tolerance, last: f64::INFINITY, rising: 0, start: None };
        let mut trace = Vec::new();
        let mut theta = vec![0.0; d];
        let all: Vec<usize> = (0..d).collect();
        watch.record(&mut trace, 0, Phase::Start, &theta, 0.0)?;
        for t in 0..cfg.iterations {
            let g = self.gradient(session, &theta, &all, &format!("grad:{t}"))?;
            for (th, gj) in theta.iter_mut().zip(&g) {
                *th = soft_threshold(*th - cfg.step * gj, cfg.step * cfg.lambda);
            }
            watch.record(&mut trace, t + 1, Phase::Prox, &theta, l1(&theta))?;
        }
        let lasso = theta.clone();
        let support: Vec<usize> = (0..d).filter(|&j| lasso[j] != 0.0).collect();
        if !support.is_empty() && cfg.refit_iterations > 0 {
            watch.last = f64::INFINITY;
            for t in 0..cfg.refit_iterations {
                let g = self.gradient(session, &theta, &support, &format!("refit:{t}"))?;
                for (&j, gj) in support.iter().zip(&g) {
                    theta[j] -= cfg.step * gj;
                }
                watch.record(&mut trace, cfg.iterations + t + 1, Phase::Refit, &theta, 0.0)?;
            }
        }
        Ok(ProxGradOutput { lasso, theta, trace })
    }
}

/// `y = θ*ᵀx + σε` with `x ~ N(0, I_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub theta_star: Vec<f64>,
    pub sigma: f64,
}

impl LinearModel {
    /// `θ* = amplitude · v` for a sign-support vector `v`.
    pub fn sparse(v: &SignSupportVector, amplitude: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(domain(format!("noise level must be positive, got {sigma}")));
        }
        Ok(LinearModel { theta_star: v.to_f64().into_iter().map(|e| e * amplitude).collect(), sigma })
    }

    pub fn d(&self) -> usize {
        self.theta_star.len()
    }

    /// Samples in the layout `[y, x_1, ..., x_d]`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Dataset {
        let d = self.d();
        let mut cols = vec![0.0; n * (d + 1)];
        for i in 0..n {
            let mut y = 0.0;
            for j in 0..d {
                let x: f64 = rng.sample(StandardNormal);
                cols[(j + 1) * n + i] = x;
                y += self.theta_star[j] * x;
            }
            let e: f64 = rng.sample(StandardNormal);
            cols[i] = y + self.sigma * e;
        }
        Dataset::from_columns(n, d + 1, cols).expect("consistent shape")
    }
}

/// `½ n⁻¹ Σ (y_i − θᵀx_i)²`.
pub fn empirical_loss(data: &Dataset, theta: &[f64]) -> f64 {
    let n = data.n();
    let mut resid = data.column(0).to_vec();
    for (j, &t) in theta.iter().enumerate() {
        if t != 0.0 {
            for (r, &x) in resid.iter_mut().zip(data.column(j + 1)) {
                *r -= t * x;
            }
        }
    }
    0.5 * resid.iter().map(|r| r * r).sum::<f64>() / n as f64
}

/// Least squares of `y` on the columns in `support`, embedded in `R^d`.
pub fn least_squares_on_support(data: &Dataset, support: &[usize]) -> Result<Vec<f64>> {
    let d = data.dim() - 1;
    let mut out = vec![0.0; d];
    if support.is_empty() {
        return Ok(out);
    }
    let n = data.n();
    let x = DMatrix::from_fn(n, support.len(), |i, k| data.column(support[k] + 1)[i]);
    let y = DVector::from_column_slice(data.column(0));
    let chol = (x.transpose() * &x).cholesky().ok_or(Error::NotSpd)?;
    let beta = chol.solve(&(x.transpose() * y));
    for (k, &j) in support.iter().enumerate() {
        out[j] = beta[k];
    }
    Ok(out)
}

/// Exact gradient oracle for the identity design: `E[∂ⱼℓ(θ)] = θⱼ − θ*ⱼ`.
/// Gradient queries only.
pub struct LinearPopulationOracle {
    pub theta_star: Vec<f64>,
}

impl Oracle for LinearPopulationOracle {
    fn respond(&mut self, query: &BoundedQuery) -> Result<f64> {
        match query.kernel() {
            QueryKernel::SqGradient { theta, j } if theta.len() == self.theta_star.len() => {
                Ok(theta[*j] - self.theta_star[*j])
            }
            k => Err(Error::Unsupported(format!("{k:?} against the linear population oracle"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::stream_rng;
    use crate::oracles::HonestOracle;
    use crate::sq::{run_algorithm, OracleConfig};

    fn config(lambda: f64, step: f64, iterations: usize) -> ProxGradConfig {
        ProxGradConfig { lambda, step, iterations, refit_iterations: 0, tolerance: 0.0 }
    }

    fn oracle_cfg(d: usize, c: &ProxGradConfig, n: usize) -> OracleConfig {
        OracleConfig::for_finite_class(0.05, n, c.budget(d)).unwrap()
    }

    #[test]
    fn population_fixpoint_is_soft_threshold() {
        let theta_star = vec![1.0, -0.05, 0.0, 0.4];
        let c = config(0.1, 1.0, 1);
        let alg = ProxGradient::new(4, c).unwrap();
        let mut o = LinearPopulationOracle { theta_star: theta_star.clone() };
        let out = run_algorithm(&alg, &mut o, &oracle_cfg(4, &c, 100)).unwrap().output;
        let want: Vec<f64> = theta_star.iter().map(|&t| soft_threshold(t, 0.1)).collect();
        assert_eq!(out.theta, want);
    }

    #[test]
    fn large_lambda_keeps_zero() {
        let v = SignSupportVector::from_support(10, &[1, 4], &[1, -1]).unwrap();
        let model = LinearModel::sparse(&v, 0.5, 1.0).unwrap();
        let data = model.sample(300, &mut stream_rng(3, 0));
        let c = config(50.0, 0.5, 20);
        let alg = ProxGradient::new(10, c).unwrap();
        let out = run_algorithm(&alg, &mut HonestOracle::new(&data), &oracle_cfg(10, &c, 300)).unwrap();
        assert!(out.output.theta.iter().all(|&t| t == 0.0));
        assert_eq!(out.transcript.budget_used(), 200);
    }

    #[test]
    fn refit_matches_least_squares() {
        let v = SignSupportVector::from_support(12, &[0, 5, 9], &[1, -1, 1]).unwrap();
        let model = LinearModel::sparse(&v, 1.0, 1.0).unwrap();
        let data = model.sample(800, &mut stream_rng(5, 0));
        let c = ProxGradConfig { lambda: default_lambda(12, 800), step: 0.5, iterations: 100, refit_iterations: 100, tolerance: 1e-12 };
        let loss = |t: &[f64]| empirical_loss(&data, t);
        let alg = ProxGradient::new(12, c).unwrap().with_monitor(&loss);
        let out = run_algorithm(&alg, &mut HonestOracle::new(&data), &oracle_cfg(12, &c, 800)).unwrap().output;
        let ls = least_squares_on_support(&data, &[0, 5, 9]).unwrap();
        let gap: f64 = out.theta.iter().zip(&ls).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(gap < 1e-8, "gap {gap}");
        let prox: Vec<f64> = out.trace.iter().filter(|p| p.phase == Phase::Prox).map(|p| p.objective).collect();
        assert!(prox.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn oversized_step_diverges() {
        let theta_star = vec![1.0, 0.0, -0.5];
        let c = config(0.0, 3.0, 50);
        let loss = |t: &[f64]| 0.5 + 0.5 * t.iter().zip(&theta_star).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let alg = ProxGradient::new(3, c).unwrap().with_monitor(&loss);
        let mut o = LinearPopulationOracle { theta_star: theta_star.clone() };
        let err = run_algorithm(&alg, &mut o, &oracle_cfg(3, &c, 200)).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)), "{err}");
    }
}
