use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exec::{stream_rng, Exec};
use crate::models::SignSupportVector;
use crate::numerics::{phi, INV_SQRT_2PI};

/// `E_P0[(dP_v1/dP0)(dP_v2/dP0)]` as a function of the overlap `⟨v1, v2⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CrossMomentKind {
    /// Known identity covariance, means `−β(1−ν)v` and `βνv`.
    GmmKnown { beta: f64, nu: f64 },
    /// Means `±βv` with covariance `I − β²vvᵀ`.
    GmmUnknown { beta: f64 },
    /// Symmetric mixture of regressions against the marginally matched null;
    /// `nfold = Some(n)` gives the cross moment of n independent copies.
    Regression { beta: f64, sigma: f64, s: usize, nfold: Option<u32> },
}

impl CrossMomentKind {
    pub fn at_overlap(&self, overlap: i64) -> Result<f64> {
        let k = overlap as f64;
        match *self {
            CrossMomentKind::GmmKnown { beta, nu } => {
                if !(nu > 0.0 && nu < 1.0) {
                    return Err(domain(format!("nu must lie in (0,1), got {nu}")));
                }
                let b2k = beta * beta * k;
                let terms = [
                    ((1.0 - nu).powi(2), nu * nu),
                    (-nu * (1.0 - nu), 2.0 * nu * (1.0 - nu)),
                    (nu * nu, (1.0 - nu).powi(2)),
                ];
                Ok(terms.iter().map(|(u, p)| p * (b2k * u).cosh()).sum())
            }
            CrossMomentKind::GmmUnknown { beta } => {
                let b4w2 = beta.powi(4) * k * k;
                if b4w2 >= 1.0 {
                    return Err(Error::Singularity(format!("beta^4 <v1,v2>^2 = {b4w2} >= 1")));
                }
                let one = 1.0 - b4w2;
                Ok(one.powf(-0.5) * (-b4w2 / one).exp() * (beta * beta * k / one).cosh())
            }
            CrossMomentKind::Regression { beta, sigma, s, nfold } => {
                let s0 = sigma * sigma + s as f64 * beta * beta;
                if beta * beta * k.abs() >= s0 {
                    return Err(Error::Singularity(format!("beta^2 |<v1,v2>| >= sigma^2 + s beta^2 ({s0})")));
                }
                let base = 1.0 / (1.0 - beta.powi(4) * k * k / (s0 * s0));
                match nfold {
                    None => Ok(base),
                    Some(n) => {
                        let v = (n as f64 * base.ln()).exp();
                        if v.is_finite() {
                            Ok(v)
                        } else {
                            Err(Error::Overflow(format!("n-fold cross moment with n = {n}")))
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMomentResult {
    pub value: f64,
    pub formula: CrossMomentKind,
    pub v1: SignSupportVector,
    pub v2: SignSupportVector,
}

pub fn cross_moment(kind: CrossMomentKind, v1: &SignSupportVector, v2: &SignSupportVector) -> Result<CrossMomentResult> {
    if v1.d() != v2.d() {
        return Err(Error::DimensionMismatch { expected: v1.d(), got: v2.d() });
    }
    if v1.s() != v2.s() {
        return Err(domain("cross moments need vectors of equal sparsity"));
    }
    if let CrossMomentKind::Regression { s, .. } = kind {
        if s != v1.s() {
            return Err(domain(format!("regression kind has s = {s}, vectors have s = {}", v1.s())));
        }
    }
    let value = kind.at_overlap(v1.inner(v2))?;
    Ok(CrossMomentResult { value, formula: kind, v1: v1.clone(), v2: v2.clone() })
}

pub fn chi2_cross_gmm_known(v1: &SignSupportVector, v2: &SignSupportVector, beta: f64, nu: f64) -> Result<f64> {
    cross_moment(CrossMomentKind::GmmKnown { beta, nu }, v1, v2).map(|r| r.value)
}

pub fn chi2_cross_gmm_unknown(v1: &SignSupportVector, v2: &SignSupportVector, beta: f64) -> Result<f64> {
    cross_moment(CrossMomentKind::GmmUnknown { beta }, v1, v2).map(|r| r.value)
}

pub fn chi2_cross_reg(
    v1: &SignSupportVector,
    v2: &SignSupportVector,
    beta: f64,
    sigma: f64,
    nfold: Option<u32>,
) -> Result<f64> {
    cross_moment(CrossMomentKind::Regression { beta, sigma, s: v1.s(), nfold }, v1, v2).map(|r| r.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

fn normal_pdf(x: f64, m: f64, sd: f64) -> f64 {
    INV_SQRT_2PI / sd * (-0.5 * ((x - m) / sd).powi(2)).exp()
}

/// Likelihood ratio `dP_v/dP0` at a null draw, with `x` indexed by `union`.
fn likelihood_ratio(kind: &CrossMomentKind, v: &SignSupportVector, union: &[usize], y: f64, x: &[f64]) -> f64 {
    let s = v.s() as f64;
    let proj: f64 = union.iter().zip(x).map(|(&i, &xi)| v.entries()[i] as f64 * xi).sum();
    match *kind {
        CrossMomentKind::GmmKnown { beta, nu } => {
            nu * (-beta * (1.0 - nu) * proj - beta * beta * (1.0 - nu).powi(2) * s / 2.0).exp()
                + (1.0 - nu) * (beta * nu * proj - beta * beta * nu * nu * s / 2.0).exp()
        }
        CrossMomentKind::GmmUnknown { beta } => {
            let u = proj / s.sqrt();
            let (m, sd) = (beta * s.sqrt(), (1.0 - s * beta * beta).sqrt());
            0.5 * (normal_pdf(u, m, sd) + normal_pdf(u, -m, sd)) / phi(u)
        }
        CrossMomentKind::Regression { beta, sigma, .. } => {
            let s0 = (sigma * sigma + s * beta * beta).sqrt();
            0.5 * (normal_pdf(y, beta * proj, sigma) + normal_pdf(y, -beta * proj, sigma)) / normal_pdf(y, 0.0, s0)
        }
    }
}

/// Monte Carlo estimate of the single-sample cross moment from null draws of the
/// coordinates in `supp(v1) ∪ supp(v2)` (and `y` for regression).
pub fn mc_cross_moment(
    kind: CrossMomentKind,
    v1: &SignSupportVector,
    v2: &SignSupportVector,
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<McEstimate> {
    if samples < 2 {
        return Err(Error::EmptyDataset);
    }
    if let CrossMomentKind::GmmUnknown { beta } = kind {
        if v1.s() as f64 * beta * beta >= 1.0 {
            return Err(Error::Singularity("s beta^2 >= 1".into()));
        }
    }
    let mut union: Vec<usize> = v1.support().iter().chain(v2.support()).copied().collect();
    union.sort_unstable();
    union.dedup();
    let y_sd = match kind {
        CrossMomentKind::Regression { beta, sigma, .. } => (sigma * sigma + v1.s() as f64 * beta * beta).sqrt(),
        _ => 0.0,
    };
    const CHUNK: usize = 100_000;
    let chunks = samples.div_ceil(CHUNK);
    let parts = exec.map(chunks, |c| {
        let m = CHUNK.min(samples - c * CHUNK);
        let mut rng = stream_rng(seed, c as u64);
        let mut x = vec![0.0; union.len()];
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..m {
            for xi in x.iter_mut() {
                *xi = rng.sample(StandardNormal);
            }
            let y = y_sd * rng.sample::<f64, _>(StandardNormal);
            let p = likelihood_ratio(&kind, v1, &union, y, &x) * likelihood_ratio(&kind, v2, &union, y, &x);
            sum += p;
            sumsq += p * p;
        }
        (sum, sumsq)
    });
    let (sum, sumsq) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sumsq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate { mean, std_error: (var / n).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ssv(e: &[i8]) -> SignSupportVector {
        SignSupportVector::from_entries(e.to_vec()).unwrap()
    }

    #[test]
    fn orthogonal_pairs_give_one() {
        let (a, b) = (ssv(&[1, 1, 0, 0]), ssv(&[0, 0, 1, -1]));
        assert_eq!(chi2_cross_gmm_known(&a, &b, 1.3, 0.3).unwrap(), 1.0);
        assert_eq!(chi2_cross_gmm_unknown(&a, &b, 0.6).unwrap(), 1.0);
        assert_eq!(chi2_cross_reg(&a, &b, 0.5, 1.0, Some(7)).unwrap(), 1.0);
        let c = ssv(&[1, -1, 0, 0]);
        assert_eq!(a.inner(&c), 0);
        assert_eq!(chi2_cross_gmm_known(&a, &c, 1.3, 0.3).unwrap(), 1.0);
    }

    #[test]
    fn pinned_values() {
        let v = ssv(&[1, 1, 1, 1, 0]);
        assert!((chi2_cross_gmm_known(&v, &v, 1.0, 0.5).unwrap() - 1f64.cosh()).abs() < 1e-14);
        let (a, b) = (ssv(&[1, 0, 1]), ssv(&[1, 1, 0]));
        let b4 = 0.3f64.powi(4);
        let want = (1.0 - b4).powf(-0.5) * (-b4 / (1.0 - b4)).exp() * (0.09 / (1.0 - b4)).cosh();
        assert!((chi2_cross_gmm_unknown(&a, &b, 0.3).unwrap() - want).abs() < 1e-15);
        let (a, b) = (ssv(&[1, -1, 0]), ssv(&[1, -1, 0]));
        assert!((chi2_cross_reg(&a, &b, 0.5, 1.0, None).unwrap() - 1.125).abs() < 1e-14);
        assert!((chi2_cross_reg(&a, &b, 0.5, 1.0, Some(3)).unwrap() - 1.423828125).abs() < 1e-12);
        assert!(matches!(chi2_cross_gmm_unknown(&a, &b, 0.8), Err(Error::Singularity(_))));
        let (p, q) = (ssv(&[1, 0, -1, 1]), ssv(&[0, 1, -1, -1]));
        assert_eq!(chi2_cross_gmm_known(&p, &q, 0.7, 0.2).unwrap(), chi2_cross_gmm_known(&q, &p, 0.7, 0.2).unwrap());
    }

    #[test]
    fn regression_pinned_value_by_quadrature() {
        use crate::numerics::quadrature::integrate;
        let kind = CrossMomentKind::Regression { beta: 0.5, sigma: 1.0, s: 2, nfold: None };
        let v = ssv(&[1, -1, 0]);
        let union = [0usize, 1];
        let s0 = 1.5f64.sqrt();
        // x = z v / sqrt(2) carries the whole dependence on x.
        let inner = |z: f64| {
            let x = [z / 2f64.sqrt(), -z / 2f64.sqrt()];
            integrate(|y| likelihood_ratio(&kind, &v, &union, y, &x).powi(2) * normal_pdf(y, 0.0, s0), -25.0, 25.0, 1e-12)
                .unwrap()
        };
        let value = integrate(|z| inner(z) * phi(z), -12.0, 12.0, 1e-11).unwrap();
        assert!((value - 1.125).abs() < 1e-8, "{value}");
    }

    #[test]
    fn closed_forms_match_monte_carlo() {
        let exec = Exec::default();
        let cases = [
            (CrossMomentKind::GmmKnown { beta: 0.8, nu: 0.3 }, ssv(&[1, 1, -1, 0, 0]), ssv(&[1, -1, -1, 0, 0])),
            (CrossMomentKind::GmmKnown { beta: 1.0, nu: 0.5 }, ssv(&[1, 1, 0, 0]), ssv(&[1, 1, 0, 0])),
            (CrossMomentKind::GmmUnknown { beta: 0.3 }, ssv(&[1, 0, 1]), ssv(&[1, 1, 0])),
            (CrossMomentKind::GmmUnknown { beta: 0.5 }, ssv(&[1, 1, 0, 0]), ssv(&[1, 1, 0, 0])),
            (CrossMomentKind::GmmUnknown { beta: 0.4 }, ssv(&[1, 1, 1, 0]), ssv(&[-1, 1, 0, 1])),
            // Regression parameters keep E[(LR LR')²] finite; beyond that the
            // sample mean has infinite variance and 5 SE is meaningless.
            (CrossMomentKind::Regression { beta: 0.2, sigma: 1.0, s: 2, nfold: None }, ssv(&[1, -1, 0]), ssv(&[1, -1, 0])),
            (CrossMomentKind::Regression { beta: 0.12, sigma: 0.8, s: 3, nfold: None }, ssv(&[1, 1, 1, 0]), ssv(&[1, -1, 0, 1])),
        ];
        for (i, (kind, a, b)) in cases.iter().enumerate() {
            let exact = cross_moment(*kind, a, b).unwrap().value;
            let mc = mc_cross_moment(*kind, a, b, 1_000_000, 100 + i as u64, exec).unwrap();
            assert!((mc.mean - exact).abs() < 5.0 * mc.std_error, "case {i}: {exact} vs {} ± {}", mc.mean, mc.std_error);
            assert!(exact >= 1.0);
        }
    }
}
