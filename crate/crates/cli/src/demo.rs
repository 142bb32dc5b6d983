//! Sparse linear regression by proximal gradient through the SQ oracle.

use std::io::Write;

use serde::Serialize;
use sqlab_core::exec::stream_rng;
use sqlab_core::models::SignSupportVector;
use sqlab_core::oracles::HonestOracle;
use sqlab_core::proxgrad::{
    default_lambda, empirical_loss, least_squares_on_support, LinearModel, ProxGradConfig, ProxGradient, TracePoint,
};
use sqlab_core::sq::{run_algorithm, OracleConfig};

use crate::config::ExperimentConfig;
use crate::CliError;

const DEMO_TAG: u64 = 0xde30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoSummary {
    pub d: usize,
    pub s: usize,
    pub n: usize,
    pub seed: u64,
    pub lambda: f64,
    pub step: f64,
    pub iterations: usize,
    pub refit_iterations: usize,
    pub queries: usize,
    pub support_true: Vec<usize>,
    pub support_found: Vec<usize>,
    /// `‖θ̂ − θ*‖₂` of the lasso iterate.
    pub lasso_error: f64,
    /// Same for the final iterate (after the refit, if any).
    pub error: f64,
    /// Least squares restricted to the true support, for reference.
    pub oracle_ls_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoRun {
    pub summary: DemoSummary,
    pub trace: Vec<TracePoint>,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `θ* = amplitude · v` with `v` drawn from stream `[tag, 0]` and data from `[tag, 1]`.
pub fn run_demo(cfg: &ExperimentConfig) -> Result<DemoRun, CliError> {
    let (d, s, n) = (cfg.d, cfg.s, cfg.n);
    if s == 0 || s > d || n < 2 {
        return Err(CliError::usage(format!("need 1 <= s <= d and n >= 2, got d = {d}, s = {s}, n = {n}")));
    }
    let sigma = cfg.sigma.noise()?;
    let demo = &cfg.demo;
    let v = SignSupportVector::random(d, s, &mut stream_rng(cfg.seed, sqlab_core::exec::stream_id(&[DEMO_TAG, 0])))?;
    let model = LinearModel::sparse(&v, demo.amplitude, sigma)?;
    let data = model.sample(n, &mut stream_rng(cfg.seed, sqlab_core::exec::stream_id(&[DEMO_TAG, 1])));
    let pg = ProxGradConfig {
        lambda: demo.lambda.unwrap_or_else(|| default_lambda(d, n)),
        step: demo.step,
        iterations: demo.iterations,
        refit_iterations: demo.refit_iterations,
        tolerance: demo.tolerance,
    };
    let loss = |t: &[f64]| empirical_loss(&data, t);
    let alg = ProxGradient::new(d, pg)?.with_monitor(&loss);
    let oracle_cfg = OracleConfig::for_finite_class(cfg.xi, n, pg.budget(d))?;
    let run = run_algorithm(&alg, &mut HonestOracle::new(&data).with_exec(crate::exec_for(cfg.threads)), &oracle_cfg)?;
    let out = run.output;
    let ls = least_squares_on_support(&data, v.support())?;
    let summary = DemoSummary {
        d,
        s,
        n,
        seed: cfg.seed,
        lambda: pg.lambda,
        step: pg.step,
        iterations: pg.iterations,
        refit_iterations: pg.refit_iterations,
        queries: run.transcript.budget_used(),
        support_true: v.support().to_vec(),
        support_found: (0..d).filter(|&j| out.lasso[j] != 0.0).collect(),
        lasso_error: distance(&out.lasso, &model.theta_star),
        error: distance(&out.theta, &model.theta_star),
        oracle_ls_error: distance(&ls, &model.theta_star),
    };
    Ok(DemoRun { summary, trace: out.trace })
}

pub fn write_trace<W: Write>(trace: &[TracePoint], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for p in trace {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refit_recovers_signal() {
        let cfg = ExperimentConfig::from_json(
            r#"{"model": "reg", "d": 20, "s": 3, "n": 1000, "demo": {"refit_iterations": 100}}"#,
        )
        .unwrap();
        let run = run_demo(&cfg).unwrap();
        let s = &run.summary;
        assert_eq!(s.support_found, s.support_true);
        assert!(s.error < 0.1, "{s:?}");
        assert!((s.error - s.oracle_ls_error).abs() < 1e-6, "{s:?}");
        assert_eq!(s.queries, 20 * 200 + 3 * 100);
        let mut buf = Vec::new();
        write_trace(&run.trace, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("iteration,phase,objective,nonzeros\n0,start,"));
    }

    #[test]
    fn divergent_step_is_negative() {
        let cfg = ExperimentConfig::from_json(
            r#"{"model": "reg", "d": 5, "s": 1, "n": 500, "demo": {"step": 5.0, "iterations": 100}}"#,
        )
        .unwrap();
        assert_eq!(run_demo(&cfg).unwrap_err().exit_code(), 1);
    }
}
