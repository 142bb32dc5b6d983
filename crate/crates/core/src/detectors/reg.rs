//! Second-moment tests for sparse mixtures of regressions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::gmm::sign_label;
use super::{sup_over, Detector, ThresholdMode};
use crate::error::{domain, Error, Result};
use crate::models::{enumerate_gs, SignSupportVector};
use crate::numerics::{phi, upper_tail};
use crate::sq::{finite_capacity, BoundedQuery, FamilyTag, QueryKernel, Session, SparseDirection, Transcript};

/// Default threshold constant in formula mode.
pub const DEFAULT_C: f64 = 4.0;

/// `a₂(t) = ∫_{|w|>t} w²(w²−1) φ(w) dw = 2[(t³ + 2t) φ(t) + 2Q(t)]`.
pub fn a2(t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(domain(format!("a2 needs t >= 0, got {t}")));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    Ok(2.0 * ((t * t * t + 2.0 * t) * phi(t) + 2.0 * upper_tail(t)))
}

/// `inf{t ≥ 1 : a₂(t) ≤ target}` by bisection; `a₂` is decreasing on `[1, ∞)`.
pub fn a2_inverse(target: f64) -> Result<f64> {
    if !(target > 0.0 && target <= 2.0) {
        return Err(domain(format!("target must lie in (0, 2], got {target}")));
    }
    let (mut lo, mut hi) = (1.0, 64.0);
    if a2(lo)? <= target {
        return Ok(lo);
    }
    if a2(hi)? > target {
        return Err(Error::Bracket(format!("a2 stays above {target} on [1, 64]")));
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if a2(mid)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Constant in the Cauchy–Schwarz bounds on the truncation bias:
/// `12` under the null and `2 sqrt(105 · 60)` under an alternative.
fn tail_constant() -> f64 {
    12f64.max(2.0 * (105.0f64 * 60.0).sqrt())
}

/// Smallest half-integer `R` with `C σ⁴ exp(−R² log n / 2) ≤ 1/n²`, so that the
/// truncation bias is at most `1/n`.
pub fn tail_level(n: usize, sigma: f64) -> Result<f64> {
    if n < 2 || !(sigma > 0.0) {
        return Err(domain("need n >= 2 and sigma > 0"));
    }
    let ln_n = (n as f64).ln();
    let log_c = tail_constant().ln() + 4.0 * sigma.ln();
    let mut r = 0.5;
    while log_c - r * r * ln_n / 2.0 > -2.0 * ln_n {
        r += 0.5;
    }
    Ok(r)
}

/// `max(2 inf{t : a₂(t) ≤ target}, R_tail(n, σ))`.
pub fn truncation_level(target: f64, n: usize, sigma: f64) -> Result<f64> {
    if !(target > 0.0 && target < 2.0) {
        return Err(domain(format!("target must lie in (0, 2), got {target}")));
    }
    Ok((2.0 * a2_inverse(target)?).max(tail_level(n, sigma)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegFamilyKind {
    Exhaustive,
    Coordinate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTestSpec {
    pub family: RegFamilyKind,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "C_const")]
    pub c_const: f64,
    pub threshold: f64,
    pub threshold_mode: ThresholdMode,
    pub xi: f64,
    pub n: usize,
    pub d: usize,
    pub s: usize,
    /// Noise level assumed by the truncation and the thresholds.
    pub sigma_hint: f64,
}

impl RegTestSpec {
    /// `C σ² log n · sqrt((s log 2d + log 1/ξ) / n)` or `C′ σ² log n · sqrt(log(d/ξ) / n)`.
    pub fn formula_threshold(&self) -> f64 {
        let n = self.n as f64;
        let inner = match self.family {
            RegFamilyKind::Exhaustive => (self.s as f64) * (2.0 * self.d as f64).ln() + (1.0 / self.xi).ln(),
            RegFamilyKind::Coordinate => (self.d as f64 / self.xi).ln(),
        };
        self.c_const * self.sigma_hint * self.sigma_hint * n.ln() * (inner / n).sqrt()
    }
}

fn check(r: f64, n: usize, sigma: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) || n < 2 || !(sigma > 0.0 && sigma.is_finite()) {
        return Err(domain("need R > 0, n >= 2 and sigma > 0"));
    }
    Ok(())
}

/// `σ² R² (R² log n − 1)`, the product of the clipped factor bounds.
fn reg_bound(r: f64, n: usize, sigma: f64) -> f64 {
    sigma * sigma * r * r * (r * r * (n as f64).ln() - 1.0).max(1.0)
}

fn reg_query(id: String, tag: FamilyTag, w: SparseDirection, r: f64, n: usize, sigma: f64) -> Result<BoundedQuery> {
    let kernel = QueryKernel::RegSecondMoment { w, y_radius: sigma * r, z_radius: r * (n as f64).ln().sqrt() };
    BoundedQuery::new(id, reg_bound(r, n, sigma), tag, kernel)
}

/// `q_v(y, x) = y² (s⁻¹(vᵀx)² − 1) · 1{|y| ≤ σR} · 1{|vᵀx| ≤ R sqrt(s log n)}` for `v ∈ G(s)`.
pub fn reg_exhaustive_queries(d: usize, s: usize, sigma: f64, r: f64, n: usize, cap: u128) -> Result<Vec<BoundedQuery>> {
    check(r, n, sigma)?;
    let scale = 1.0 / (s as f64).sqrt();
    enumerate_gs(d, s, cap)?
        .iter()
        .map(|v: &SignSupportVector| {
            let w = SparseDirection::new(v.support().to_vec(), v.support().iter().map(|&i| v.entries()[i] as f64 * scale).collect());
            reg_query(format!("reg-exh:{}", sign_label(v)), FamilyTag::RegExhaustive, w, r, n, sigma)
        })
        .collect()
}

/// `q_j(y, x) = y² (x_j² − 1) · 1{|y| ≤ σR} · 1{|x_j| ≤ R sqrt(log n)}`.
pub fn reg_coordinate_queries(d: usize, sigma: f64, r: f64, n: usize) -> Result<Vec<BoundedQuery>> {
    check(r, n, sigma)?;
    (0..d)
        .map(|j| reg_query(format!("reg-coord:{j}"), FamilyTag::RegCoordinate, SparseDirection::new(vec![j], vec![1.0]), r, n, sigma))
        .collect()
}

/// `1{sup Z_q ≥ threshold}` over the exhaustive or coordinate family.
#[derive(Debug, Clone)]
pub struct RegDetector {
    queries: Vec<BoundedQuery>,
    ids: Vec<Arc<str>>,
    spec: RegTestSpec,
    capacity: f64,
}

impl RegDetector {
    /// Formula-mode detector; `r = None` uses `truncation_level(1/2, n, σ)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        family: RegFamilyKind,
        d: usize,
        s: usize,
        sigma_hint: f64,
        r: Option<f64>,
        n: usize,
        xi: f64,
        cap: u128,
    ) -> Result<Self> {
        if !(xi > 0.0 && xi < 1.0) {
            return Err(domain(format!("xi must lie in (0,1), got {xi}")));
        }
        let r = match r {
            Some(r) => r,
            None => truncation_level(0.5, n, sigma_hint)?,
        };
        let queries = match family {
            RegFamilyKind::Exhaustive => reg_exhaustive_queries(d, s, sigma_hint, r, n, cap)?,
            RegFamilyKind::Coordinate => reg_coordinate_queries(d, sigma_hint, r, n)?,
        };
        let mut spec = RegTestSpec {
            family,
            r,
            c_const: DEFAULT_C,
            threshold: 0.0,
            threshold_mode: ThresholdMode::Formula,
            xi,
            n,
            d,
            s,
            sigma_hint,
        };
        spec.threshold = spec.formula_threshold();
        let capacity = finite_capacity(queries.len() as u128)?;
        let ids = queries.iter().map(BoundedQuery::shared_id).collect();
        Ok(RegDetector { queries, ids, spec, capacity })
    }

    pub fn spec(&self) -> &RegTestSpec {
        &self.spec
    }

    pub fn queries(&self) -> &[BoundedQuery] {
        &self.queries
    }
}

impl Detector for RegDetector {
    fn name(&self) -> &'static str {
        match self.spec.family {
            RegFamilyKind::Exhaustive => "exhaustive",
            RegFamilyKind::Coordinate => "coordinate",
        }
    }

    fn budget(&self) -> usize {
        self.queries.len()
    }

    fn capacity(&self) -> f64 {
        self.capacity
    }

    fn issue(&self, session: &mut Session<'_>) -> Result<()> {
        session.ask_all(&self.queries).map(|_| ())
    }

    fn statistic(&self, transcript: &Transcript) -> Result<f64> {
        sup_over(transcript, &self.ids, 0)
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
    use crate::models::{population_expectation, untruncated_expectation, Instance, RegParams, DEFAULT_ENUM_CAP};
    use crate::numerics::quadrature::integrate;

    #[test]
    fn a2_values_and_quadrature() {
        assert!((a2(0.0).unwrap() - 2.0).abs() < 1e-14);
        let want = 2.0 * (3.0 * phi(1.0) + 2.0 * upper_tail(1.0));
        assert!((a2(1.0).unwrap() - want).abs() < 1e-14);
        assert!((a2(1.0).unwrap() - 2.08645).abs() < 1e-4);
        assert!(a2(8.0).unwrap() <= 1e-10);
        for k in 0..=20 {
            let t = if k == 0 { 0.0 } else { 10f64.powf(-2.0 + 3.0 * k as f64 / 20.0) };
            let f = |w: f64| 2.0 * w * w * (w * w - 1.0) * phi(w);
            let q = integrate(f, t, 40.0, 1e-13).unwrap();
            assert!((a2(t).unwrap() - q).abs() < 1e-10, "t={t}");
        }
        assert!(a2(-1.0).is_err());
    }

    #[test]
    fn truncation_levels() {
        let t = a2_inverse(0.5).unwrap();
        assert!(t > 2.7 && t < 2.8, "{t}");
        assert!(a2(2.7).unwrap() > 0.5 && a2(2.8).unwrap() < 0.5);
        // a2(1) > 2, so the level-2 crossing on [1, 64] is past t = 1.
        let t2 = a2_inverse(2.0).unwrap();
        assert!(t2 > 1.3 && t2 < 1.4 && (a2(t2).unwrap() - 2.0).abs() < 1e-8, "{t2}");
        let r = truncation_level(0.5, 2000, 1.0).unwrap();
        assert!(r > 5.4 && r < 5.6);
        let mut last = 0.0;
        for n in [10usize, 100, 1000, 100_000, 10_000_000] {
            let rt = tail_level(n, 3.0).unwrap();
            assert!(rt >= last - 1e-12 || n > 10);
            last = rt;
        }
        assert!(tail_level(10, 3.0).unwrap() >= tail_level(1_000_000, 3.0).unwrap());
    }

    #[test]
    fn population_values() {
        let d = 6;
        let n = 2000;
        let beta = 0.3;
        let v = SignSupportVector::from_entries(vec![1, 0, -1, 0, 1, 0]).unwrap();
        let alt = Instance::Reg(RegParams::alternative(beta, v.clone(), 1.0).unwrap());
        let null = Instance::Reg(RegParams::null(beta, v.clone(), 1.0).unwrap());
        let r = truncation_level(0.5, n, 1.0).unwrap();
        let qs = reg_exhaustive_queries(d, 3, 1.0, r, n, DEFAULT_ENUM_CAP).unwrap();
        let q = qs.iter().find(|q| q.id() == "reg-exh:+0,-2,+4").unwrap();
        assert!((untruncated_expectation(q, &alt).unwrap() - 2.0 * 3.0 * beta * beta).abs() < 1e-8);
        assert!(population_expectation(q, &null).unwrap().abs() < 1e-6);
        let gap = population_expectation(q, &alt).unwrap() - population_expectation(q, &null).unwrap();
        assert!(gap >= 3.0 * beta * beta, "{gap}");
        let qc = reg_coordinate_queries(d, 1.0, r, n).unwrap();
        assert!((untruncated_expectation(&qc[2], &alt).unwrap() - 2.0 * beta * beta).abs() < 1e-8);
        let gap = population_expectation(&qc[2], &alt).unwrap() - population_expectation(&qc[2], &null).unwrap();
        assert!(gap >= beta * beta);
        assert!(population_expectation(&qc[1], &alt).unwrap().abs() < 1e-6);
    }

    #[test]
    fn formula_thresholds_and_bound() {
        let det = RegDetector::new(RegFamilyKind::Coordinate, 30, 3, 1.5, Some(5.5), 2000, 0.05, DEFAULT_ENUM_CAP).unwrap();
        let n = 2000f64;
        let want = 4.0 * 2.25 * n.ln() * ((30.0f64 / 0.05).ln() / n).sqrt();
        assert_eq!(det.threshold(), want);
        assert_eq!(det.budget(), 30);
        let m = det.queries()[0].bound();
        assert!((m - 2.25 * 30.25 * (30.25 * n.ln() - 1.0)).abs() < 1e-9);
        let det = RegDetector::new(RegFamilyKind::Exhaustive, 10, 2, 1.0, None, 2000, 0.05, DEFAULT_ENUM_CAP).unwrap();
        let want = 4.0 * n.ln() * ((2.0 * 20f64.ln() + 20f64.ln()) / n).sqrt();
        assert_eq!(det.threshold(), want);
        assert_eq!(det.budget(), 180);
        let json = serde_json::to_string(det.spec()).unwrap();
        assert!(json.contains("\"C_const\":4.0") && json.contains("\"sigma_hint\""));
    }
}
