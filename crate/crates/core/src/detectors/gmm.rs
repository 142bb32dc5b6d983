//! Exhaustive sign-support and diagonal thresholding tests for Gaussian mixtures.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{sup_over, Detector, ThresholdMode};
use crate::error::{domain, Error, Result};
use crate::models::{enumerate_gs, gs_size, untruncated_expectation, population_expectation, Covariance, Instance, SignSupportVector};
use crate::sq::{finite_capacity, BoundedQuery, FamilyTag, QueryKernel, Session, SparseDirection, Transcript};

pub const DEFAULT_R: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FamilyDescriptor {
    GmmExhaustive { d: usize, s: usize, size: usize },
    GmmDiagonal { d: usize },
    GmmNet { d: usize, s: usize, delta: f64, size: usize },
    GmmNetDiagonal { d: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConstants {
    #[serde(rename = "R")]
    pub r: f64,
    pub xi: f64,
    pub n: usize,
    pub d: usize,
    pub s: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub family: FamilyDescriptor,
    pub threshold: f64,
    pub threshold_mode: ThresholdMode,
    pub constants: TestConstants,
}

fn check_constants(r: f64, n: usize, xi: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(domain(format!("truncation constant R must be positive, got {r}")));
    }
    if n < 2 {
        return Err(domain("n must be at least 2 (thresholds use log n)"));
    }
    if !(xi > 0.0 && xi < 1.0) {
        return Err(domain(format!("xi must lie in (0,1), got {xi}")));
    }
    Ok(())
}

/// `1 + 2R² log n · sqrt((s log 2d + log 1/ξ) / n)`.
pub fn exhaustive_formula_threshold(c: &TestConstants) -> f64 {
    let n = c.n as f64;
    1.0 + 2.0 * c.r * c.r * n.ln() * (((c.s as f64) * (2.0 * c.d as f64).ln() + (1.0 / c.xi).ln()) / n).sqrt()
}

/// `1 + 2R² log n · sqrt(log(d/ξ) / n)`.
pub fn diagonal_formula_threshold(c: &TestConstants) -> f64 {
    let n = c.n as f64;
    1.0 + 2.0 * c.r * c.r * n.ln() * ((c.d as f64 / c.xi).ln() / n).sqrt()
}

pub(crate) fn sign_label(v: &SignSupportVector) -> String {
    v.support()
        .iter()
        .map(|&i| format!("{}{}", if v.entries()[i] > 0 { '+' } else { '-' }, i))
        .collect::<Vec<_>>()
        .join(",")
}

pub(crate) fn sparse(v: &SignSupportVector) -> SparseDirection {
    SparseDirection::new(v.support().to_vec(), v.support().iter().map(|&i| v.entries()[i] as f64).collect())
}

/// `q_v(x) = (vᵀΣ⁻¹x)² / (vᵀΣ⁻¹v) · 1{|vᵀΣ⁻¹x| ≤ R sqrt(log n) sqrt(vᵀΣ⁻¹v)}`, one per
/// `v ∈ G(s)` in enumeration order, each bounded by `R² log n`.
pub fn exhaustive_queries(d: usize, s: usize, sigma: &Covariance, r: f64, n: usize, cap: u128) -> Result<Vec<BoundedQuery>> {
    if sigma.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: sigma.dim() });
    }
    check_constants(r, n, 0.5)?;
    let ln_n = (n as f64).ln();
    let bound = r * r * ln_n;
    enumerate_gs(d, s, cap)?
        .iter()
        .map(|v| {
            let w = sigma.inv_apply(&sparse(v));
            let norm = sigma.inv_quad(&sparse(v));
            let kernel = QueryKernel::ProjSquare { w, center: 0.0, scale: 1.0 / norm, radius: r * ln_n.sqrt() * norm.sqrt() };
            BoundedQuery::new(format!("gmm-exh:{}", sign_label(v)), bound, FamilyTag::GmmExhaustive, kernel)
        })
        .collect()
}

/// `q_j(x) = x_j² / σ_j · 1{|x_j / sqrt(σ_j)| ≤ R sqrt(log n)}`, bounded by `R² log n`.
pub fn diagonal_queries(sigma: &Covariance, r: f64, n: usize) -> Result<Vec<BoundedQuery>> {
    check_constants(r, n, 0.5)?;
    let ln_n = (n as f64).ln();
    (0..sigma.dim())
        .map(|j| {
            let var = sigma.variance(j);
            let kernel = QueryKernel::ProjSquare {
                w: SparseDirection::new(vec![j], vec![1.0]),
                center: 0.0,
                scale: 1.0 / var,
                radius: r * ln_n.sqrt() * var.sqrt(),
            };
            BoundedQuery::new(format!("gmm-diag:{j}"), r * r * ln_n, FamilyTag::GmmDiagonal, kernel)
        })
        .collect()
}

/// Largest `|E[q] − E[q*]|` over `queries` and `instances`, where `q*` is the
/// untruncated core. Fails when it exceeds `1/n`.
pub fn check_truncation_bias(queries: &[BoundedQuery], instances: &[Instance], n: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for inst in instances {
        for q in queries {
            let gap = (population_expectation(q, inst)? - untruncated_expectation(q, inst)?).abs();
            worst = worst.max(gap);
        }
    }
    let limit = 1.0 / n as f64;
    if worst > limit {
        return Err(Error::TruncationBias { bias: worst, limit });
    }
    Ok(worst)
}

/// Shared machinery of the single-stage sup tests.
#[derive(Debug, Clone)]
struct SupTest {
    queries: Vec<BoundedQuery>,
    ids: Vec<Arc<str>>,
    spec: TestSpec,
    capacity: f64,
}

impl SupTest {
    fn new(queries: Vec<BoundedQuery>, spec: TestSpec) -> Result<Self> {
        let capacity = finite_capacity(queries.len() as u128)?;
        let ids = queries.iter().map(BoundedQuery::shared_id).collect();
        Ok(SupTest { queries, ids, spec, capacity })
    }
}

macro_rules! sup_detector {
    ($ty:ident, $name:literal) => {
        impl Detector for $ty {
            fn name(&self) -> &'static str {
                $name
            }

            fn budget(&self) -> usize {
                self.0.queries.len()
            }

            fn capacity(&self) -> f64 {
                self.0.capacity
            }

            fn issue(&self, session: &mut Session<'_>) -> Result<()> {
                session.ask_all(&self.0.queries).map(|_| ())
            }

            fn statistic(&self, transcript: &Transcript) -> Result<f64> {
                sup_over(transcript, &self.0.ids, 0)
            }

            fn threshold(&self) -> f64 {
                self.0.spec.threshold
            }

            fn set_threshold(&mut self, threshold: f64, mode: ThresholdMode) {
                self.0.spec.threshold = threshold;
                self.0.spec.threshold_mode = mode;
            }
        }

        impl $ty {
            pub fn spec(&self) -> &TestSpec {
                &self.0.spec
            }

            pub fn queries(&self) -> &[BoundedQuery] {
                &self.0.queries
            }
        }
    };
}

/// `1{sup_v Z_{q_v} ≥ threshold}` over all of G(s).
#[derive(Debug, Clone)]
pub struct ExhaustiveDetector(SupTest);

impl ExhaustiveDetector {
    /// Formula-mode detector.
    pub fn new(s: usize, sigma: &Covariance, r: f64, n: usize, xi: f64, cap: u128) -> Result<Self> {
        check_constants(r, n, xi)?;
        let d = sigma.dim();
        let queries = exhaustive_queries(d, s, sigma, r, n, cap)?;
        let constants = TestConstants { r, xi, n, d, s };
        let spec = TestSpec {
            family: FamilyDescriptor::GmmExhaustive { d, s, size: gs_size(d, s)? as usize },
            threshold: exhaustive_formula_threshold(&constants),
            threshold_mode: ThresholdMode::Formula,
            constants,
        };
        Ok(ExhaustiveDetector(SupTest::new(queries, spec)?))
    }
}

sup_detector!(ExhaustiveDetector, "exhaustive");

/// `1{max_j Z_{q_j} ≥ threshold}`.
#[derive(Debug, Clone)]
pub struct DiagonalDetector(SupTest);

impl DiagonalDetector {
    pub fn new(sigma: &Covariance, s: usize, r: f64, n: usize, xi: f64) -> Result<Self> {
        check_constants(r, n, xi)?;
        let d = sigma.dim();
        let queries = diagonal_queries(sigma, r, n)?;
        let constants = TestConstants { r, xi, n, d, s };
        let spec = TestSpec {
            family: FamilyDescriptor::GmmDiagonal { d },
            threshold: diagonal_formula_threshold(&constants),
            threshold_mode: ThresholdMode::Formula,
            constants,
        };
        Ok(DiagonalDetector(SupTest::new(queries, spec)?))
    }
}

sup_detector!(DiagonalDetector, "diagonal");

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GmmParams, DEFAULT_ENUM_CAP};
    use crate::oracles::PopulationOracle;
    use crate::sq::{Oracle, OracleConfig};
    use crate::detectors::run_detector;

    struct Fixed(Vec<f64>);
    impl Oracle for Fixed {
        fn respond(&mut self, _: &BoundedQuery) -> Result<f64> {
            Ok(self.0.remove(0))
        }
    }

    #[test]
    fn family_sizes_and_bounds() {
        let qs = exhaustive_queries(20, 2, &Covariance::identity(20), 6.0, 1000, DEFAULT_ENUM_CAP).unwrap();
        assert_eq!(qs.len(), 760);
        assert!(qs.iter().all(|q| (q.bound() - 36.0 * 1000f64.ln()).abs() < 1e-12));
        let d = DiagonalDetector::new(&Covariance::identity(20), 2, 6.0, 1000, 0.05).unwrap();
        assert_eq!(d.budget(), 20);
        assert!((d.capacity() - 20f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn identity_substitution_and_truncation() {
        let n = 1000;
        let qs = exhaustive_queries(4, 2, &Covariance::identity(4), 2.0, n, DEFAULT_ENUM_CAP).unwrap();
        let q = qs.iter().find(|q| q.id() == "gmm-exh:+0,-2").unwrap();
        let x = [0.3, 5.0, -0.4, 1.0];
        let u: f64 = 0.3 + 0.4;
        assert!((q.raw(&x) - u * u / 2.0).abs() < 1e-15);
        let far = [4.0, 0.0, -4.0, 0.0];
        assert!(8.0 > 2.0 * (2.0 * (n as f64).ln()).sqrt());
        assert_eq!(q.raw(&far), 0.0);
    }

    #[test]
    fn decisions_on_fixed_responses() {
        let det = DiagonalDetector::new(&Covariance::identity(5), 1, 6.0, 1000, 0.05).unwrap();
        let cfg = det.oracle_config(0.05, 1000).unwrap();
        let run = run_detector(&det, &mut Fixed(vec![1.0; 5]), &cfg).unwrap();
        assert!(!run.reject);
        let mut resp = vec![1.0; 5];
        resp[3] = 1.0 + 10.0 * (det.threshold() - 1.0);
        assert!(run_detector(&det, &mut Fixed(resp), &cfg).unwrap().reject);
        let short = Transcript::new();
        assert!(matches!(det.statistic(&short), Err(Error::IncompleteTranscript(_))));
    }

    #[test]
    fn golden_thresholds() {
        let c = TestConstants { r: 6.0, xi: 0.05, n: 1000, d: 30, s: 3 };
        let want = 1.0 + 72.0 * 1000f64.ln() * ((3.0 * 60f64.ln() + 20f64.ln()) / 1000.0).sqrt();
        assert_eq!(exhaustive_formula_threshold(&c), want);
        let want = 1.0 + 72.0 * 1000f64.ln() * ((30.0f64 / 0.05).ln() / 1000.0).sqrt();
        assert_eq!(diagonal_formula_threshold(&c), want);
    }

    #[test]
    fn strong_signal_population_oracle_rejects() {
        let d = 10;
        let v = SignSupportVector::from_entries(vec![0, 1, 0, 0, -1, 0, 0, 0, 0, 0]).unwrap();
        let alt = Instance::Gmm(GmmParams::sparse_alternative(&v, 4.0, 0.5, Covariance::identity(d)).unwrap());
        let n = 1_000_000_000;
        let det = DiagonalDetector::new(&Covariance::identity(d), 2, 6.0, n, 0.05).unwrap();
        let cfg: OracleConfig = det.oracle_config(0.05, n).unwrap();
        let mut o = PopulationOracle::new(alt, cfg, 0.0, 0);
        assert!(run_detector(&det, &mut o, &cfg).unwrap().reject);
    }

    #[test]
    fn truncation_bias_at_default_r() {
        let d = 8;
        let qs = exhaustive_queries(d, 2, &Covariance::identity(d), DEFAULT_R, 1000, DEFAULT_ENUM_CAP).unwrap();
        let v = SignSupportVector::from_entries(vec![1, 0, 0, -1, 0, 0, 0, 0]).unwrap();
        let insts = [
            Instance::Gmm(GmmParams::null(Covariance::identity(d))),
            Instance::Gmm(GmmParams::sparse_alternative(&v, 1.0, 0.5, Covariance::identity(d)).unwrap()),
        ];
        assert!(check_truncation_bias(&qs, &insts, 1000).unwrap() < 1e-3);
        let tight = exhaustive_queries(d, 2, &Covariance::identity(d), 0.5, 1000, DEFAULT_ENUM_CAP).unwrap();
        assert!(matches!(check_truncation_bias(&tight, &insts, 1000), Err(Error::TruncationBias { .. })));
    }
}
