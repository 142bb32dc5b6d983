use std::cell::Cell;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::exec::{stream_rng, Exec};
use crate::models::expectation::expectation;
use crate::models::{Instance, McBudget};
use crate::sq::{BoundedQuery, Oracle, OracleConfig};

/// The indistinguishability oracle: under the null it answers `E_P0[q]`; under an
/// alternative it answers `E_P0[q]` whenever that is within `τ_{q,v}` of
/// `E_Pv[q]` (tolerance evaluated at `E_Pv[q]`), and `E_Pv[q]` otherwise.
///
/// The second component of the result is true when a Monte Carlo estimate was used.
pub fn adversarial_respond(
    query: &BoundedQuery,
    null: &Instance,
    truth: &Instance,
    config: &OracleConfig,
    mc: Option<McBudget>,
) -> Result<(f64, bool)> {
    let e0 = expectation(query, null, mc)?;
    if truth == null {
        return Ok((e0.value, e0.approximate));
    }
    let ev = expectation(query, truth, mc)?;
    let approx = e0.approximate || ev.approximate;
    let tau = config.tolerance(query.bound(), ev.value)?;
    if (e0.value - ev.value).abs() <= tau {
        Ok((e0.value, approx))
    } else {
        Ok((ev.value, approx))
    }
}

pub struct AdversarialOracle {
    null: Instance,
    truth: Instance,
    config: OracleConfig,
    mc: Option<McBudget>,
    exec: Exec,
    approximate: Cell<bool>,
}

impl AdversarialOracle {
    pub fn new(null: Instance, truth: Instance, config: OracleConfig) -> Self {
        AdversarialOracle { null, truth, config, mc: None, exec: Exec::default(), approximate: Cell::new(false) }
    }

    /// Allows custom queries, answered by Monte Carlo under `budget`.
    pub fn with_mc(mut self, budget: McBudget) -> Self {
        self.mc = Some(budget);
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// True once any answer relied on a Monte Carlo estimate.
    pub fn approximate(&self) -> bool {
        self.approximate.get()
    }
}

impl Oracle for AdversarialOracle {
    fn respond(&mut self, query: &BoundedQuery) -> Result<f64> {
        let (z, approx) = adversarial_respond(query, &self.null, &self.truth, &self.config, self.mc)?;
        self.approximate.set(self.approximate.get() | approx);
        Ok(z)
    }

    fn respond_batch(&mut self, queries: &[BoundedQuery]) -> Result<Vec<f64>> {
        let (null, truth, config, mc) = (&self.null, &self.truth, &self.config, self.mc);
        let out = self.exec.try_map(queries.len(), |i| adversarial_respond(&queries[i], null, truth, config, mc))?;
        if out.iter().any(|(_, a)| *a) {
            self.approximate.set(true);
        }
        Ok(out.into_iter().map(|(z, _)| z).collect())
    }
}

/// Answers `E[q] + u·τ_q` with `u` uniform on `[−perturbation, perturbation]`, a valid
/// oracle for any `perturbation ∈ [0, 1]`.
pub struct PopulationOracle {
    instance: Instance,
    config: OracleConfig,
    perturbation: f64,
    rng: ChaCha8Rng,
}

impl PopulationOracle {
    pub fn new(instance: Instance, config: OracleConfig, perturbation: f64, seed: u64) -> Self {
        PopulationOracle { instance, config, perturbation: perturbation.clamp(0.0, 1.0), rng: stream_rng(seed, 0) }
    }
}

impl Oracle for PopulationOracle {
    fn respond(&mut self, query: &BoundedQuery) -> Result<f64> {
        let e = crate::models::population_expectation(query, &self.instance)?;
        if self.perturbation == 0.0 {
            return Ok(e);
        }
        let tau = self.config.tolerance(query.bound(), e)?;
        let u: f64 = self.rng.random_range(-1.0..=1.0);
        Ok(e + u * self.perturbation * tau)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::gmm::diagonal_queries;
    use crate::models::{Covariance, GmmParams, SignSupportVector};

    #[test]
    fn answers_follow_the_gap_rule() {
        let d = 6;
        let qs = diagonal_queries(&Covariance::identity(d), 6.0, 500).unwrap();
        let cfg = OracleConfig::for_finite_class(0.05, 500, d).unwrap();
        let null = Instance::Gmm(GmmParams::null(Covariance::identity(d)));
        let v = SignSupportVector::from_entries(vec![1, 0, 0, -1, 0, 0]).unwrap();
        for (beta, distinguished) in [(0.5, false), (20.0, true)] {
            let alt = Instance::Gmm(GmmParams::sparse_alternative(&v, beta, 0.5, Covariance::identity(d)).unwrap());
            let mut o = AdversarialOracle::new(null.clone(), alt.clone(), cfg);
            let e0 = crate::models::population_expectation(&qs[0], &null).unwrap();
            let ev = crate::models::population_expectation(&qs[0], &alt).unwrap();
            let z = o.respond(&qs[0]).unwrap();
            assert_eq!(z, if distinguished { ev } else { e0 });
            let tau = cfg.tolerance(qs[0].bound(), ev).unwrap();
            assert!((z - ev).abs() <= tau);
            let z1 = o.respond(&qs[1]).unwrap();
            assert_eq!(z1, crate::models::population_expectation(&qs[1], &null).unwrap());
        }
    }
}
