//! Population expectations of bounded queries.
//!
//! Every registered GMM query depends on `x` only through `u = wᵀx`, which is a
//! two-component normal mixture, so its mean is a sum of truncated normal partial
//! moments. Regression queries reduce to a one-dimensional integral over
//! `z = wᵀx` of `(z² − 1)` times the conditional truncated second moment of `y`,
//! computed by adaptive quadrature. [`expectation_by_quadrature`] is a separate
//! code path (direct integration) used to validate both.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Component, GmmParams, Hypothesis, Instance, RegParams};
use crate::error::{Error, Result};
use crate::numerics::{normal_partial_moments, quadrature::integrate_pieces};
use crate::sq::{BoundMode, BoundedQuery, QueryKernel, SparseDirection};

const QUAD_TOL: f64 = 1e-12;

/// Monte Carlo budget for queries without an analytic form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McBudget {
    pub samples: usize,
    pub seed: u64,
}

impl Default for McBudget {
    fn default() -> Self {
        McBudget { samples: 1_000_000, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub value: f64,
    /// Zero for analytic values.
    pub std_error: f64,
    pub approximate: bool,
}

/// E[q] under `instance` for registered families. Custom and gradient queries are
/// rejected; use [`expectation`] with a Monte Carlo budget for those.
pub fn population_expectation(query: &BoundedQuery, instance: &Instance) -> Result<f64> {
    let raw = kernel_expectation(query.kernel(), instance, false)?;
    Ok(raw.clamp(-query.bound(), query.bound()))
}

/// Mean of the kernel with every truncation removed.
pub fn untruncated_expectation(query: &BoundedQuery, instance: &Instance) -> Result<f64> {
    kernel_expectation(query.kernel(), instance, true)
}

/// Analytic value when available, otherwise Monte Carlo under `mc`.
pub fn expectation(query: &BoundedQuery, instance: &Instance, mc: Option<McBudget>) -> Result<Expectation> {
    match population_expectation(query, instance) {
        Ok(value) => Ok(Expectation { value, std_error: 0.0, approximate: false }),
        Err(Error::Unsupported(msg)) => match mc {
            Some(b) => monte_carlo(query, instance, b),
            None => Err(Error::Unsupported(msg)),
        },
        Err(e) => Err(e),
    }
}

/// Sample mean and standard error of the bounded query over fresh draws.
pub fn monte_carlo(query: &BoundedQuery, instance: &Instance, budget: McBudget) -> Result<Expectation> {
    if budget.samples < 2 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let chunk = 50_000;
    let (mut sum, mut sumsq, mut done) = (0.0, 0.0, 0usize);
    let mut row = Vec::new();
    while done < budget.samples {
        let m = chunk.min(budget.samples - done);
        let data = instance.sample(m, &mut rng);
        for i in 0..m {
            data.row_into(i, &mut row);
            let v = query.eval(&row, BoundMode::Clip)?;
            sum += v;
            sumsq += v * v;
        }
        done += m;
    }
    let n = done as f64;
    let mean = sum / n;
    let var = ((sumsq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(Expectation { value: mean, std_error: (var / n).sqrt(), approximate: true })
}

fn radius(r: f64, untruncated: bool) -> f64 {
    if untruncated {
        f64::INFINITY
    } else {
        r
    }
}

fn kernel_expectation(kernel: &QueryKernel, instance: &Instance, untruncated: bool) -> Result<f64> {
    match (kernel, instance) {
        (QueryKernel::ProjSquare { w, center, scale, radius: r }, Instance::Gmm(p)) => {
            let r = radius(*r, untruncated);
            Ok(p.projection(w)
                .iter()
                .map(|c| {
                    let [m0, m1, m2] = normal_partial_moments(c.mean, c.sd, -r, r);
                    c.weight * scale * (m2 - 2.0 * center * m1 + center * center * m0)
                })
                .sum())
        }
        (QueryKernel::ProjLinear { w, radius: r }, Instance::Gmm(p)) => {
            let r = radius(*r, untruncated);
            Ok(p.projection(w).iter().map(|c| c.weight * normal_partial_moments(c.mean, c.sd, -r, r)[1]).sum())
        }
        (QueryKernel::RegSecondMoment { w, y_radius, z_radius }, Instance::Reg(p)) => {
            check_reg_dim(w, p)?;
            reg_second_moment(w, radius(*y_radius, untruncated), radius(*z_radius, untruncated), p)
        }
        (QueryKernel::Custom(_), _) => Err(Error::Unsupported("custom query has no analytic expectation".into())),
        (QueryKernel::SqGradient { .. }, _) => {
            Err(Error::Unsupported("gradient queries are only answered from data or by a model-specific oracle".into()))
        }
        (k, Instance::Gmm(_)) => Err(Error::Unsupported(format!("{k:?} under a Gaussian mixture"))),
        (k, Instance::Reg(_)) => Err(Error::Unsupported(format!("{k:?} under a regression mixture"))),
    }
}

fn check_reg_dim(w: &SparseDirection, p: &RegParams) -> Result<()> {
    match w.max_index() {
        Some(m) if m >= p.d() => Err(Error::DimensionMismatch { expected: p.d(), got: m + 1 }),
        _ => Ok(()),
    }
}

/// (sd of z, Cov(y, z), sd of y) for `z = wᵀx`; the sign of η drops out because the
/// kernel is even in both arguments.
fn reg_joint(w: &SparseDirection, p: &RegParams) -> (f64, f64, f64) {
    let wz = w.w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cov = match p.hypothesis {
        Hypothesis::Null => 0.0,
        Hypothesis::Alternative => {
            p.beta * w.idx.iter().zip(&w.w).map(|(&i, &x)| p.direction.entries()[i] as f64 * x).sum::<f64>()
        }
    };
    (wz, cov, p.null_sigma0_sq().sqrt())
}

fn reg_second_moment(w: &SparseDirection, cy: f64, cz: f64, p: &RegParams) -> Result<f64> {
    let (sz, cov, sy) = reg_joint(w, p);
    if sz == 0.0 {
        return Ok(0.0);
    }
    let g = |lo: f64, hi: f64| {
        let [m0, _, m2] = normal_partial_moments(0.0, sz, lo, hi);
        m2 - m0
    };
    if cov == 0.0 {
        let ey = normal_partial_moments(0.0, sy, -cy, cy)[2];
        return Ok(ey * g(-cz, cz));
    }
    if cy.is_infinite() && cz.is_infinite() {
        return Ok(sy * sy * (sz * sz - 1.0) + 2.0 * cov * cov);
    }
    let slope = cov / (sz * sz);
    let cond_sd = (sy * sy - cov * slope).max(0.0).sqrt();
    let integrand = |z: f64| {
        let ey = normal_partial_moments(slope * z, cond_sd, -cy, cy)[2];
        (z * z - 1.0) * crate::numerics::phi(z / sz) / sz * ey
    };
    let lim = cz.min(14.0 * sz);
    integrate_pieces(integrand, &breakpoints(&[-1.0, 0.0, 1.0, -sz, sz], lim), QUAD_TOL)
}

fn breakpoints(inner: &[f64], lim: f64) -> Vec<f64> {
    let mut pts = vec![-lim, lim];
    pts.extend(inner.iter().copied().filter(|x| x.abs() < lim));
    pts
}

/// Direct numerical integration, independent of the partial-moment formulas.
/// Accurate to about 1e−10 for registered families.
pub fn expectation_by_quadrature(query: &BoundedQuery, instance: &Instance) -> Result<f64> {
    match (query.kernel(), instance) {
        (QueryKernel::ProjSquare { w, .. } | QueryKernel::ProjLinear { w, .. }, Instance::Gmm(p)) => {
            gmm_quadrature(query, w, p)
        }
        (QueryKernel::RegSecondMoment { w, y_radius, z_radius }, Instance::Reg(p)) => {
            let (sz, cov, sy) = reg_joint(w, p);
            let zl = z_radius.min(14.0 * sz);
            let yl = y_radius.min(14.0 * sy);
            let det = sy * sy * sz * sz - cov * cov;
            let dens = |y: f64, z: f64| {
                let q = (sz * sz * y * y - 2.0 * cov * y * z + sy * sy * z * z) / det;
                (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
            };
            let outer = |z: f64| {
                let inner = integrate_pieces(|y| y * y * dens(y, z), &breakpoints(&[0.0], yl), 1e-13);
                (z * z - 1.0) * inner.unwrap_or(f64::NAN)
            };
            integrate_pieces(outer, &breakpoints(&[-1.0, 0.0, 1.0], zl), 1e-11)
        }
        _ => Err(Error::Unsupported("no quadrature path for this pairing".into())),
    }
}

fn gmm_quadrature(query: &BoundedQuery, w: &SparseDirection, p: &GmmParams) -> Result<f64> {
    let comps: [Component; 2] = p.projection(w);
    let dens = |u: f64| comps.iter().map(|c| c.weight * crate::numerics::phi((u - c.mean) / c.sd) / c.sd).sum::<f64>();
    let phi_u = |u: f64| match query.kernel() {
        QueryKernel::ProjSquare { center, scale, radius, .. } => {
            if u.abs() <= *radius {
                scale * (u - center) * (u - center)
            } else {
                0.0
            }
        }
        QueryKernel::ProjLinear { radius, .. } => {
            if u.abs() <= *radius {
                u
            } else {
                0.0
            }
        }
        _ => unreachable!(),
    };
    let r = match query.kernel() {
        QueryKernel::ProjSquare { radius, .. } | QueryKernel::ProjLinear { radius, .. } => *radius,
        _ => unreachable!(),
    };
    let lo = comps.iter().map(|c| c.mean - 14.0 * c.sd).fold(f64::INFINITY, f64::min).max(-r);
    let hi = comps.iter().map(|c| c.mean + 14.0 * c.sd).fold(f64::NEG_INFINITY, f64::max).min(r);
    if hi <= lo {
        return Ok(0.0);
    }
    let mut pts = vec![lo, hi];
    for c in &comps {
        for k in [-3.0, 0.0, 3.0] {
            let x = c.mean + k * c.sd;
            if x > lo && x < hi {
                pts.push(x);
            }
        }
    }
    integrate_pieces(|u| phi_u(u) * dens(u), &pts, 1e-13).map(|v| v.clamp(-query.bound(), query.bound()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Covariance, SignSupportVector};
    use crate::sq::FamilyTag;

    fn square(w: SparseDirection, center: f64, scale: f64, radius: f64) -> BoundedQuery {
        BoundedQuery::new("sq", 1e6, FamilyTag::GmmExhaustive, QueryKernel::ProjSquare { w, center, scale, radius }).unwrap()
    }

    #[test]
    fn gmm_closed_form_matches_quadrature() {
        let v = SignSupportVector::from_entries(vec![1, 0, -1, 1]).unwrap();
        let alt = Instance::Gmm(GmmParams::sparse_alternative(&v, 0.8, 0.3, Covariance::identity(4)).unwrap());
        let w = SparseDirection::new(vec![0, 2, 3], vec![1.0, -1.0, 1.0]);
        let qs = [
            square(w.clone(), 0.0, 1.0 / 3.0, 2.5),
            square(w.clone(), 0.4, 1.0, 1.0),
            BoundedQuery::new("lin", 10.0, FamilyTag::GmmNetStage1, QueryKernel::ProjLinear { w: w.clone(), radius: 1.5 }).unwrap(),
        ];
        for q in &qs {
            let a = population_expectation(q, &alt).unwrap();
            let b = expectation_by_quadrature(q, &alt).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn untruncated_gmm_values() {
        let v = SignSupportVector::from_entries(vec![1, -1, 0]).unwrap();
        let w = SparseDirection::new(vec![0, 1], vec![1.0, -1.0]);
        let q = square(w, 0.0, 0.5, 3.0);
        let null = Instance::Gmm(GmmParams::null(Covariance::identity(3)));
        assert!((untruncated_expectation(&q, &null).unwrap() - 1.0).abs() < 1e-14);
        let (beta, nu) = (0.7, 0.5);
        let alt = Instance::Gmm(GmmParams::sparse_alternative(&v, beta, nu, Covariance::identity(3)).unwrap());
        let want = 1.0 + nu * (1.0 - nu) * beta * beta * 2.0;
        assert!((untruncated_expectation(&q, &alt).unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn regression_values() {
        let v = SignSupportVector::from_entries(vec![1, -1, 0, 1]).unwrap();
        let beta = 0.5;
        let alt = Instance::Reg(RegParams::alternative(beta, v.clone(), 1.0).unwrap());
        let null = Instance::Reg(RegParams::null(beta, v.clone(), 1.0).unwrap());
        let s3 = 3f64.sqrt();
        let w = SparseDirection::new(vec![0, 1, 3], vec![1.0 / s3, -1.0 / s3, 1.0 / s3]);
        let make = |cy: f64, cz: f64| {
            BoundedQuery::new(
                "reg",
                1e6,
                FamilyTag::RegExhaustive,
                QueryKernel::RegSecondMoment { w: w.clone(), y_radius: cy, z_radius: cz },
            )
            .unwrap()
        };
        let q = make(4.0, 3.0);
        assert!((untruncated_expectation(&q, &alt).unwrap() - 2.0 * 3.0 * beta * beta).abs() < 1e-13);
        assert!(untruncated_expectation(&q, &null).unwrap().abs() < 1e-13);
        for inst in [&alt, &null] {
            let a = population_expectation(&q, inst).unwrap();
            let b = expectation_by_quadrature(&q, inst).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        let wide = make(60.0, 60.0);
        assert!((population_expectation(&wide, &alt).unwrap() - 1.5).abs() < 1e-10);
    }

    #[test]
    fn custom_needs_budget() {
        let q = BoundedQuery::custom("c", 100.0, |x| x[0] * x[0]).unwrap();
        let null = Instance::Gmm(GmmParams::null(Covariance::identity(2)));
        assert!(matches!(expectation(&q, &null, None), Err(Error::Unsupported(_))));
        let e = expectation(&q, &null, Some(McBudget { samples: 200_000, seed: 9 })).unwrap();
        assert!(e.approximate);
        assert!((e.value - 1.0).abs() < 5.0 * e.std_error);
    }
}
