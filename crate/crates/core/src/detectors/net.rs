//! Covering nets of the rescaled sparse sphere and the two-stage general-mean tests.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::gmm::{FamilyDescriptor, TestConstants, TestSpec};
use super::{sup_over, Detector, ThresholdMode};
use crate::error::{domain, Error, Result};
use crate::exec::stream_rng;
use crate::models::{binomial, Covariance};
use crate::sq::{finite_capacity, BoundedQuery, FamilyTag, QueryKernel, Session, SparseDirection, Transcript};

const NET_SEED: u64 = 0x6e65_7400;
const PROBE_FACTOR: f64 = 200.0;

/// `(1 + 2/δ)^s`, the packing bound on a δ-separated subset of the unit sphere in R^s.
pub fn net_size_bound(delta: f64, s: usize) -> f64 {
    (1.0 + 2.0 / delta).powi(s as i32)
}

fn unit_sphere<R: Rng + ?Sized>(s: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..s).map(|_| rng.sample(StandardNormal)).collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return z.into_iter().map(|v| v / norm).collect();
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy farthest-point δ-cover of a probe set on the unit sphere of R^s.
/// Every point added is more than δ from the previous ones, so the result is
/// δ-separated.
fn base_net(delta: f64, s: usize) -> Vec<Vec<f64>> {
    if s == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    let m = (PROBE_FACTOR * net_size_bound(delta, s)).ceil() as usize;
    let mut rng = stream_rng(NET_SEED, s as u64);
    let probes: Vec<Vec<f64>> = (0..m).map(|_| unit_sphere(s, &mut rng)).collect();
    let mut net = vec![probes[0].clone()];
    let mut gap: Vec<f64> = probes.iter().map(|p| sq_dist(p, &probes[0])).collect();
    loop {
        let (far, &worst) = gap.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
        if worst <= delta * delta {
            return net;
        }
        let next = probes[far].clone();
        for (g, p) in gap.iter_mut().zip(&probes) {
            *g = g.min(sq_dist(p, &next));
        }
        net.push(next);
    }
}

fn supports(d: usize, s: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, d: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..=d - left {
            cur.push(i);
            rec(i + 1, d, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, d, s, &mut Vec::new(), &mut out);
    out
}

/// Per-support map `u ↦ L⁻ᵀu` with `LLᵀ = (Σ⁻¹)_SS`, an isometry from the
/// Euclidean sphere onto `{v : supp(v) ⊆ S, vᵀΣ⁻¹v = 1}`.
fn lift(sigma: &Covariance, support: &[usize], base: &[Vec<f64>]) -> Result<Vec<SparseDirection>> {
    let chol = sigma.inv_block(support).cholesky().ok_or(Error::NotSpd)?;
    let lt = chol.l().transpose();
    base.iter()
        .map(|u| {
            let v = lt
                .solve_upper_triangular(&DVector::from_column_slice(u))
                .ok_or_else(|| Error::Singularity("singular inverse-covariance block".into()))?;
            Ok(SparseDirection::new(support.to_vec(), v.iter().copied().collect()))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct NetBlock {
    pub support: Vec<usize>,
    pub elements: Vec<SparseDirection>,
}

/// A δ-cover of the rescaled sparse unit sphere, grouped by support.
#[derive(Debug, Clone)]
pub struct CoveringNet {
    pub delta: f64,
    pub sigma: Covariance,
    pub s: usize,
    pub blocks: Vec<NetBlock>,
}

impl CoveringNet {
    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.elements.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn elements(&self) -> impl Iterator<Item = &SparseDirection> {
        self.blocks.iter().flat_map(|b| b.elements.iter())
    }

    /// Fraction of `probes` fresh random points per support whose nearest net
    /// element lies within δ in the Σ⁻¹ metric.
    pub fn probe_coverage(&self, probes: usize, seed: u64) -> Result<f64> {
        let mut rng = stream_rng(seed, self.s as u64);
        let base: Vec<Vec<f64>> = (0..probes).map(|_| unit_sphere(self.s, &mut rng)).collect();
        let (mut hit, mut total) = (0usize, 0usize);
        for block in &self.blocks {
            for p in lift(&self.sigma, &block.support, &base)? {
                let best = block
                    .elements
                    .iter()
                    .map(|e| {
                        let diff = SparseDirection::new(p.idx.clone(), p.w.iter().zip(&e.w).map(|(a, b)| a - b).collect());
                        self.sigma.inv_quad(&diff)
                    })
                    .fold(f64::INFINITY, f64::min);
                hit += usize::from(best <= self.delta * self.delta * (1.0 + 1e-9));
                total += 1;
            }
        }
        Ok(hit as f64 / total as f64)
    }
}

/// Greedy farthest-point cover for every support of size `s`. The cover is built
/// once on the Euclidean sphere and lifted per support, which preserves distances.
pub fn covering_net(delta: f64, sigma: &Covariance, s: usize, cap: u128) -> Result<CoveringNet> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain(format!("delta must lie in (0,1), got {delta}")));
    }
    let d = sigma.dim();
    if s == 0 || s > d {
        return Err(domain(format!("need 1 <= s <= d, got s={s}, d={d}")));
    }
    let count = binomial(d as u64, s as u64).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::CapExceeded { size: count, cap });
    }
    let base = base_net(delta, s);
    let bound = net_size_bound(delta, s);
    let blocks = supports(d, s)
        .into_iter()
        .map(|support| {
            if base.len() as f64 > bound {
                return Err(Error::NetOverflow { support: support.clone(), size: base.len(), bound });
            }
            let elements = lift(sigma, &support, &base)?;
            Ok(NetBlock { support, elements })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoveringNet { delta, sigma: sigma.clone(), s, blocks })
}

/// `1 + 16R² log n · sqrt(2(s log 5d + log 1/ξ) / n)`.
pub fn net_formula_threshold(c: &TestConstants) -> f64 {
    let n = c.n as f64;
    1.0 + 16.0 * c.r * c.r * n.ln() * (2.0 * ((c.s as f64) * (5.0 * c.d as f64).ln() + (1.0 / c.xi).ln()) / n).sqrt()
}

/// `1 + 16R² log n · sqrt(log(2d/ξ) / n)`.
pub fn net_diagonal_formula_threshold(c: &TestConstants) -> f64 {
    let n = c.n as f64;
    1.0 + 16.0 * c.r * c.r * n.ln() * ((2.0 * c.d as f64 / c.xi).ln() / n).sqrt()
}

/// The two-stage family: stage 1 estimates `wᵀμ`, stage 2 the centered second
/// moment around that estimate.
#[derive(Debug, Clone)]
pub struct TwoStageQueries {
    directions: Vec<SparseDirection>,
    radius: f64,
    stage1: Vec<BoundedQuery>,
    stage1_ids: Vec<Arc<str>>,
    stage2_ids: Vec<Arc<str>>,
}

impl TwoStageQueries {
    /// `directions` are the projections `w = Σ⁻¹v`.
    pub fn new(directions: Vec<SparseDirection>, r: f64, n: usize) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) || n < 2 {
            return Err(domain("need R > 0 and n >= 2"));
        }
        let radius = r * (n as f64).ln().sqrt();
        let stage1 = directions
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let kernel = QueryKernel::ProjLinear { w: w.clone(), radius };
                BoundedQuery::new(format!("gmm-net1:{k}"), radius, FamilyTag::GmmNetStage1, kernel)
            })
            .collect::<Result<Vec<_>>>()?;
        let stage1_ids = stage1.iter().map(BoundedQuery::shared_id).collect();
        let stage2_ids = (0..directions.len()).map(|k| Arc::from(format!("gmm-net2:{k}"))).collect();
        Ok(TwoStageQueries { directions, radius, stage1, stage1_ids, stage2_ids })
    }

    pub fn stage1(&self) -> &[BoundedQuery] {
        &self.stage1
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Stage-2 queries centered at the realized stage-1 responses, which must head
    /// `transcript`.
    pub fn stage2(&self, transcript: &Transcript) -> Result<Vec<BoundedQuery>> {
        let entries = transcript.entries();
        if entries.len() < self.len() || entries.iter().zip(&self.stage1_ids).any(|(e, id)| e.id != *id) {
            return Err(Error::StageOrdering("stage-2 queries need every stage-1 response first".into()));
        }
        self.directions
            .iter()
            .zip(entries)
            .zip(&self.stage2_ids)
            .map(|((w, e), id)| {
                let kernel = QueryKernel::ProjSquare { w: w.clone(), center: e.response, scale: 1.0, radius: self.radius };
                BoundedQuery::new(Arc::clone(id), 4.0 * self.radius * self.radius, FamilyTag::GmmNetStage2, kernel)
            })
            .collect()
    }
}

/// `1{sup_k Z_{q̄_k} ≥ threshold}` over a two-stage family.
#[derive(Debug, Clone)]
pub struct TwoStageDetector {
    name: &'static str,
    queries: TwoStageQueries,
    spec: TestSpec,
    capacity: f64,
}

impl TwoStageDetector {
    /// Stage-1 directions `Σ⁻¹v` for every `v` in a δ-cover of the sparse sphere.
    pub fn net(net: &CoveringNet, r: f64, n: usize, xi: f64) -> Result<Self> {
        let d = net.sigma.dim();
        let dirs: Vec<SparseDirection> = net.elements().map(|v| net.sigma.inv_apply(v)).collect();
        let constants = TestConstants { r, xi, n, d, s: net.s };
        let spec = TestSpec {
            family: FamilyDescriptor::GmmNet { d, s: net.s, delta: net.delta, size: dirs.len() },
            threshold: net_formula_threshold(&constants),
            threshold_mode: ThresholdMode::Formula,
            constants,
        };
        Self::build("net", dirs, spec)
    }

    /// Coordinate directions `e_j / sqrt(σ_j)`.
    pub fn diagonal(sigma: &Covariance, s: usize, r: f64, n: usize, xi: f64) -> Result<Self> {
        let d = sigma.dim();
        let dirs = (0..d).map(|j| SparseDirection::new(vec![j], vec![1.0 / sigma.variance(j).sqrt()])).collect();
        let constants = TestConstants { r, xi, n, d, s };
        let spec = TestSpec {
            family: FamilyDescriptor::GmmNetDiagonal { d },
            threshold: net_diagonal_formula_threshold(&constants),
            threshold_mode: ThresholdMode::Formula,
            constants,
        };
        Self::build("net-diagonal", dirs, spec)
    }

    fn build(name: &'static str, dirs: Vec<SparseDirection>, spec: TestSpec) -> Result<Self> {
        let c = spec.constants;
        if !(c.xi > 0.0 && c.xi < 1.0) {
            return Err(domain(format!("xi must lie in (0,1), got {}", c.xi)));
        }
        let queries = TwoStageQueries::new(dirs, c.r, c.n)?;
        let capacity = finite_capacity(2 * queries.len() as u128)?;
        Ok(TwoStageDetector { name, queries, spec, capacity })
    }

    pub fn spec(&self) -> &TestSpec {
        &self.spec
    }

    pub fn queries(&self) -> &TwoStageQueries {
        &self.queries
    }
}

impl Detector for TwoStageDetector {
    fn name(&self) -> &'static str {
        self.name
    }

    fn budget(&self) -> usize {
        2 * self.queries.len()
    }

    fn capacity(&self) -> f64 {
        self.capacity
    }

    fn issue(&self, session: &mut Session<'_>) -> Result<()> {
        session.ask_all(self.queries.stage1())?;
        let stage2 = self.queries.stage2(session.transcript())?;
        session.ask_all(&stage2).map(|_| ())
    }

    fn statistic(&self, transcript: &Transcript) -> Result<f64> {
        sup_over(transcript, &self.queries.stage1_ids, 0)?;
        sup_over(transcript, &self.queries.stage2_ids, self.queries.len())
    }

    fn threshold(&self) -> f64 {
        self.spec.threshold
    }

    fn set_threshold(&mut self, threshold: f64, mode: ThresholdMode) {
        self.spec.threshold = threshold;
        self.spec.threshold_mode = mode;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::run_detector;
    use crate::models::{population_expectation, GmmParams, Instance};
    use crate::oracles::PopulationOracle;
    use nalgebra::DMatrix;

    #[test]
    fn one_sparse_net_is_two_points() {
        let sigma = Covariance::diagonal(vec![4.0, 1.0, 9.0]).unwrap();
        let net = covering_net(0.5, &sigma, 1, 1_000_000).unwrap();
        assert_eq!(net.len(), 6);
        assert!(net.blocks.iter().all(|b| b.elements.len() == 2));
        for v in net.elements() {
            assert!((sigma.inv_quad(v) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn size_bound_and_probe_coverage() {
        let net = covering_net(0.5, &Covariance::identity(4), 2, 1_000_000).unwrap();
        assert!(net.blocks.iter().all(|b| b.elements.len() <= 25));
        assert!(net.probe_coverage(2000, 7).unwrap() >= 0.999);
        let dense = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.3 });
        let sigma = Covariance::dense(dense).unwrap();
        let net = covering_net(0.5, &sigma, 2, 1_000_000).unwrap();
        for v in net.elements() {
            assert!((sigma.inv_quad(v) - 1.0).abs() < 1e-10);
        }
        assert!(net.probe_coverage(2000, 8).unwrap() >= 0.999);
        let net3 = covering_net(0.5, &Covariance::identity(3), 3, 1_000_000).unwrap();
        assert!(net3.len() as f64 <= 125.0);
        assert!(net3.probe_coverage(5000, 9).unwrap() >= 0.999);
    }

    #[test]
    fn stage_two_before_stage_one_is_an_error() {
        let q = TwoStageQueries::new(vec![SparseDirection::new(vec![0], vec![1.0])], 6.0, 100).unwrap();
        assert!(matches!(q.stage2(&Transcript::new()), Err(Error::StageOrdering(_))));
        let mut t = Transcript::new();
        t.push(Arc::from("gmm-net1:0"), 0.25);
        let s2 = q.stage2(&t).unwrap();
        assert!(matches!(s2[0].kernel(), QueryKernel::ProjSquare { center, .. } if *center == 0.25));
    }

    #[test]
    fn null_population_run_accepts_and_budget_is_twice_net() {
        let sigma = Covariance::identity(5);
        let net = covering_net(0.5, &sigma, 2, 1_000_000).unwrap();
        let det = TwoStageDetector::net(&net, 6.0, 5000, 0.05).unwrap();
        let cfg = det.oracle_config(0.05, 5000).unwrap();
        let mut o = PopulationOracle::new(Instance::Gmm(GmmParams::null(sigma)), cfg, 0.0, 0);
        let run = run_detector(&det, &mut o, &cfg).unwrap();
        assert_eq!(run.transcript.len(), 2 * net.len());
        assert!((run.statistic - 1.0).abs() < 1e-6);
        assert!(!run.reject);
    }

    #[test]
    fn stage_two_value_at_cosine_seven_eighths() {
        let sigma = Covariance::identity(2);
        let (beta, nu) = (1.0, 0.5);
        let mu1 = vec![-beta * (1.0 - nu), 0.0];
        let mu2 = vec![beta * nu, 0.0];
        let p = GmmParams::new(nu, mu1, mu2, sigma.clone()).unwrap();
        let rho = nu * (1.0 - nu) * beta * beta;
        let c = 7.0 / 8.0;
        let v1 = SparseDirection::new(vec![0, 1], vec![c, (1.0 - c * c).sqrt()]);
        let q = TwoStageQueries::new(vec![v1], 6.0, 100_000).unwrap();
        let inst = Instance::Gmm(p);
        let z1 = population_expectation(&q.stage1()[0], &inst).unwrap();
        let mut t = Transcript::new();
        t.push(q.stage1()[0].shared_id(), z1);
        let z2 = population_expectation(&q.stage2(&t).unwrap()[0], &inst).unwrap();
        assert!(z2 >= 1.0 + 49.0 / 64.0 * rho - 1e-6);
        assert!(z2 < 1.0 + 7.0 / 8.0 * rho);
    }

    #[test]
    fn diagonal_variant_detects_strong_signal() {
        let sigma = Covariance::diagonal(vec![1.0, 2.0, 0.5, 1.0]).unwrap();
        let mu2 = vec![0.0, 6.0, 0.0, 0.0];
        let p = GmmParams::new(0.5, vec![0.0; 4], mu2, sigma.clone()).unwrap();
        let n = 1_000_000_000;
        let det = TwoStageDetector::diagonal(&sigma, 1, 6.0, n, 0.05).unwrap();
        let cfg = det.oracle_config(0.05, n).unwrap();
        let mut o = PopulationOracle::new(Instance::Gmm(p), cfg, 0.0, 0);
        assert!(run_detector(&det, &mut o, &cfg).unwrap().reject);
        let mut o = PopulationOracle::new(Instance::Gmm(GmmParams::null(sigma)), cfg, 0.0, 0);
        assert!(!run_detector(&det, &mut o, &cfg).unwrap().reject);
    }
}
