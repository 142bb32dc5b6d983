use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::AdversarialOracle;
use crate::error::{domain, Result};
use crate::exec::Exec;
use crate::models::expectation::expectation;
use crate::models::{Covariance, GmmParams, Instance, McBudget, RegParams, SignSupportVector};
use crate::sq::{run_algorithm, BoundedQuery, Oracle, OracleConfig, SqAlgorithm, Transcript};

/// A null distribution together with the alternatives `P_v` indexed by G(s).
pub trait HypothesisFamily: Sync {
    fn null(&self) -> Instance;
    fn alternative(&self, v: &SignSupportVector) -> Result<Instance>;
}

/// `P₀ = N(0, Σ)` against `θ_v = [−β(1−ν)v, βνv, Σ]`.
#[derive(Debug, Clone)]
pub struct GmmFamily {
    pub beta: f64,
    pub nu: f64,
    pub sigma: Covariance,
}

impl HypothesisFamily for GmmFamily {
    fn null(&self) -> Instance {
        Instance::Gmm(GmmParams::null(self.sigma.clone()))
    }

    fn alternative(&self, v: &SignSupportVector) -> Result<Instance> {
        GmmParams::sparse_alternative(v, self.beta, self.nu, self.sigma.clone()).map(Instance::Gmm)
    }
}

/// Marginally matched null `y ~ N(0, σ² + sβ²)` against the regression mixtures `β v`.
#[derive(Debug, Clone)]
pub struct RegFamily {
    pub beta: f64,
    pub sigma: f64,
    pub d: usize,
    pub s: usize,
}

impl HypothesisFamily for RegFamily {
    fn null(&self) -> Instance {
        let support: Vec<usize> = (0..self.s).collect();
        let v = SignSupportVector::from_support(self.d, &support, &vec![1; self.s]).expect("s <= d");
        Instance::Reg(RegParams::null(self.beta, v, self.sigma).expect("validated parameters"))
    }

    fn alternative(&self, v: &SignSupportVector) -> Result<Instance> {
        RegParams::alternative(self.beta, v.clone(), self.sigma).map(Instance::Reg)
    }
}

/// C(q): alternatives whose query mean differs from the null mean by at least
/// `τ_{q,v}`, split by the sign of `E_Pv[q] − E_P0[q]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinguishableSet {
    pub query_id: String,
    /// Positive deviation.
    pub c1: Vec<SignSupportVector>,
    pub c2: Vec<SignSupportVector>,
}

impl DistinguishableSet {
    pub fn len(&self) -> usize {
        self.c1.len() + self.c2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn members(&self) -> impl Iterator<Item = &SignSupportVector> {
        self.c1.iter().chain(&self.c2)
    }
}

/// `Some(true)` for C₁, `Some(false)` for C₂, `None` outside C(q).
fn membership(
    query: &BoundedQuery,
    alts: &[SignSupportVector],
    family: &dyn HypothesisFamily,
    config: &OracleConfig,
    mc: Option<McBudget>,
    exec: Exec,
) -> Result<(Vec<Option<bool>>, bool)> {
    let e0 = expectation(query, &family.null(), mc)?;
    let rows = exec.try_map(alts.len(), |i| {
        let ev = expectation(query, &family.alternative(&alts[i])?, mc)?;
        let tau = config.tolerance(query.bound(), ev.value)?;
        let gap = ev.value - e0.value;
        Ok::<_, crate::Error>((if gap.abs() >= tau { Some(gap > 0.0) } else { None }, ev.approximate))
    })?;
    let approx = e0.approximate || rows.iter().any(|r| r.1);
    Ok((rows.into_iter().map(|r| r.0).collect(), approx))
}

pub fn distinguishable_set(
    query: &BoundedQuery,
    alts: &[SignSupportVector],
    family: &dyn HypothesisFamily,
    config: &OracleConfig,
    exec: Exec,
) -> Result<DistinguishableSet> {
    let (m, _) = membership(query, alts, family, config, None, exec)?;
    let mut set = DistinguishableSet { query_id: query.id().to_string(), c1: Vec::new(), c2: Vec::new() };
    for (v, flag) in alts.iter().zip(m) {
        match flag {
            Some(true) => set.c1.push(v.clone()),
            Some(false) => set.c2.push(v.clone()),
            None => {}
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCertificate {
    pub queries: Vec<String>,
    pub union_size: usize,
    pub gs_size: usize,
    pub witness: Option<SignSupportVector>,
    pub transcripts_identical: bool,
    /// Set when some expectation was a Monte Carlo estimate.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub approximate: bool,
}

struct Recording<'a> {
    inner: &'a mut AdversarialOracle,
    issued: Vec<BoundedQuery>,
}

impl Oracle for Recording<'_> {
    fn respond(&mut self, query: &BoundedQuery) -> Result<f64> {
        self.issued.push(query.clone());
        self.inner.respond(query)
    }

    fn respond_batch(&mut self, queries: &[BoundedQuery]) -> Result<Vec<f64>> {
        self.issued.extend_from_slice(queries);
        self.inner.respond_batch(queries)
    }
}

/// Transcript of `algorithm` against the adversarial oracle when `truth` generates
/// the data.
pub fn replay<A: SqAlgorithm + ?Sized>(
    algorithm: &A,
    family: &dyn HypothesisFamily,
    truth: Instance,
    config: &OracleConfig,
    mc: Option<McBudget>,
) -> Result<Transcript> {
    let mut oracle = AdversarialOracle::new(family.null(), truth, *config);
    if let Some(b) = mc {
        oracle = oracle.with_mc(b);
    }
    Ok(run_algorithm(algorithm, &mut oracle, config)?.transcript)
}

/// Runs `algorithm` against the adversarial oracle under the null, computes the
/// union of C(q) over the queries it issued, picks the first uncovered `v₀` of
/// `alts` (which should be in enumeration order) and replays the algorithm under
/// `P_{v₀}`.
pub fn coverage_certificate<A: SqAlgorithm + ?Sized>(
    algorithm: &A,
    alts: &[SignSupportVector],
    family: &dyn HypothesisFamily,
    config: &OracleConfig,
    mc: Option<McBudget>,
    exec: Exec,
) -> Result<CoverageCertificate> {
    if alts.is_empty() {
        return Err(domain("alternative family is empty"));
    }
    let mut adv = AdversarialOracle::new(family.null(), family.null(), *config).with_exec(exec);
    if let Some(b) = mc {
        adv = adv.with_mc(b);
    }
    let mut rec = Recording { inner: &mut adv, issued: Vec::new() };
    let null_run = run_algorithm(algorithm, &mut rec, config)?;
    let issued = std::mem::take(&mut rec.issued);
    let mut approximate = adv.approximate();

    let mut covered = vec![false; alts.len()];
    let mut seen = HashSet::new();
    for q in &issued {
        if !seen.insert(q.shared_id()) {
            continue;
        }
        let (m, approx) = membership(q, alts, family, config, mc, exec)?;
        approximate |= approx;
        for (c, flag) in covered.iter_mut().zip(m) {
            *c |= flag.is_some();
        }
    }
    let union_size = covered.iter().filter(|c| **c).count();
    let witness = covered.iter().position(|c| !c).map(|i| alts[i].clone());
    let transcripts_identical = match &witness {
        Some(v0) => {
            let mut alt_oracle = AdversarialOracle::new(family.null(), family.alternative(v0)?, *config).with_exec(exec);
            if let Some(b) = mc {
                alt_oracle = alt_oracle.with_mc(b);
            }
            let alt_run = run_algorithm(algorithm, &mut alt_oracle, config)?;
            approximate |= alt_oracle.approximate();
            alt_run.transcript.bitwise_eq(&null_run.transcript)
        }
        None => false,
    };
    Ok(CoverageCertificate {
        queries: issued.iter().map(|q| q.id().to_string()).collect(),
        union_size,
        gs_size: alts.len(),
        witness,
        transcripts_identical,
        approximate,
    })
}
