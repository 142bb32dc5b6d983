//! Detectors built from estimators, support selectors and cluster assigners.
//! Each wraps an SQ algorithm and only sees its output.

use std::sync::Arc;

use crate::error::{domain, Result};
use crate::models::Covariance;
use crate::sq::{BoundedQuery, Session, SparseDirection, SqAlgorithm};

/// `1{Δμ̂ᵀΣ⁻¹Δμ̂ ≥ γₙ/3}` where `estimator` outputs `Δμ̂`.
pub struct EstimatorTest<E> {
    pub estimator: E,
    pub sigma: Covariance,
    pub gamma_n: f64,
}

pub fn estimator_to_detector<E>(estimator: E, sigma: Covariance, gamma_n: f64) -> Result<EstimatorTest<E>>
where
    E: SqAlgorithm<Output = Vec<f64>>,
{
    if !(gamma_n > 0.0 && gamma_n.is_finite()) {
        return Err(domain(format!("gamma_n must be positive, got {gamma_n}")));
    }
    Ok(EstimatorTest { estimator, sigma, gamma_n })
}

impl<E: SqAlgorithm<Output = Vec<f64>>> SqAlgorithm for EstimatorTest<E> {
    type Output = bool;

    fn execute(&self, session: &mut Session<'_>) -> Result<bool> {
        let est = self.estimator.execute(session)?;
        if est.len() != self.sigma.dim() {
            return Err(crate::Error::DimensionMismatch { expected: self.sigma.dim(), got: est.len() });
        }
        Ok(self.sigma.inv_quad(&SparseDirection::from_dense(&est)) >= self.gamma_n / 3.0)
    }
}

/// `1{Ŝ = target}`; the target is the support of Δμ under the alternative of interest.
pub struct SupportTest<S> {
    pub selector: S,
    pub target: Vec<usize>,
}

pub fn support_to_detector<S>(selector: S, mut target: Vec<usize>) -> SupportTest<S>
where
    S: SqAlgorithm<Output = Vec<usize>>,
{
    target.sort_unstable();
    target.dedup();
    SupportTest { selector, target }
}

impl<S: SqAlgorithm<Output = Vec<usize>>> SqAlgorithm for SupportTest<S> {
    type Output = bool;

    fn execute(&self, session: &mut Session<'_>) -> Result<bool> {
        let mut got = self.selector.execute(session)?;
        got.sort_unstable();
        got.dedup();
        Ok(got == self.target)
    }
}

pub type Assignment = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Cluster-assignment reduction. After the assigner returns `F`, one more query
/// `q̄(x) = g(x) · 1{F(x) = 1} · 1{|g(x)| ≤ R sqrt(log n)}` with
/// `g(x) = v₀ᵀΣ⁻¹(x − μ)` is issued, and the test rejects when
/// `|z̄| > C′ sqrt(log n · log(d/ξ) / n)`.
pub struct ClusteringTest<A> {
    pub assigner: A,
    direction: SparseDirection,
    center: f64,
    radius: f64,
    threshold: f64,
}

/// Default `C′ = 2√2 · R`.
pub fn default_c_prime(r: f64) -> f64 {
    2.0 * std::f64::consts::SQRT_2 * r
}

/// `mu` is the overall mean and `delta_mu` the mean gap defining
/// `v₀ = Δμ / sqrt(ΔμᵀΣ⁻¹Δμ)`.
#[allow(clippy::too_many_arguments)]
pub fn clustering_to_detector<A>(
    assigner: A,
    sigma: &Covariance,
    mu: &[f64],
    delta_mu: &[f64],
    r: f64,
    n: usize,
    xi: f64,
    c_prime: f64,
) -> Result<ClusteringTest<A>>
where
    A: SqAlgorithm<Output = Assignment>,
{
    let d = sigma.dim();
    if mu.len() != d || delta_mu.len() != d {
        return Err(crate::Error::DimensionMismatch { expected: d, got: mu.len().max(delta_mu.len()) });
    }
    if n < 2 || !(r > 0.0) || !(xi > 0.0 && xi < 1.0) || !(c_prime > 0.0) {
        return Err(domain("need n >= 2, R > 0, C' > 0 and xi in (0,1)"));
    }
    let dm = SparseDirection::from_dense(delta_mu);
    let norm = sigma.inv_quad(&dm);
    if !(norm > 0.0) {
        return Err(domain("mean gap must be non-zero"));
    }
    let v0 = SparseDirection::new(dm.idx.clone(), dm.w.iter().map(|x| x / norm.sqrt()).collect());
    let direction = sigma.inv_apply(&v0);
    let center = direction.dot(mu);
    let ln_n = (n as f64).ln();
    let threshold = c_prime * (ln_n * (d as f64 / xi).ln() / n as f64).sqrt();
    Ok(ClusteringTest { assigner, direction, center, radius: r * ln_n.sqrt(), threshold })
}

impl<A> ClusteringTest<A> {
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn query(&self, assignment: Assignment) -> Result<BoundedQuery> {
        let (w, c, radius) = (self.direction.clone(), self.center, self.radius);
        BoundedQuery::custom("cluster-gap", radius, move |x| {
            let g = w.dot(x) - c;
            if g.abs() <= radius && assignment(x) {
                g
            } else {
                0.0
            }
        })
    }
}

impl<A: SqAlgorithm<Output = Assignment>> SqAlgorithm for ClusteringTest<A> {
    type Output = bool;

    fn execute(&self, session: &mut Session<'_>) -> Result<bool> {
        let f = self.assigner.execute(session)?;
        let z = session.ask(&self.query(f)?)?;
        Ok(z.abs() > self.threshold)
    }
}

/// Regression reduction `1{‖β̂‖² / σ² ≥ 5γ/8}` where `estimator` outputs `β̂`.
pub struct RegEstimatorTest<E> {
    pub estimator: E,
    pub sigma: f64,
    pub gamma: f64,
}

pub fn reg_estimator_to_detector<E>(estimator: E, sigma: f64, gamma: f64) -> Result<RegEstimatorTest<E>>
where
    E: SqAlgorithm<Output = Vec<f64>>,
{
    if !(sigma > 0.0) || !(gamma > 0.0) {
        return Err(domain("need sigma > 0 and gamma > 0"));
    }
    Ok(RegEstimatorTest { estimator, sigma, gamma })
}

impl<E: SqAlgorithm<Output = Vec<f64>>> SqAlgorithm for RegEstimatorTest<E> {
    type Output = bool;

    fn execute(&self, session: &mut Session<'_>) -> Result<bool> {
        let b = self.estimator.execute(session)?;
        let energy: f64 = b.iter().map(|x| x * x).sum();
        Ok(energy / (self.sigma * self.sigma) >= 5.0 * self.gamma / 8.0)
    }
}
