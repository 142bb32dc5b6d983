use crate::error::{domain, Error, Result};
use crate::numerics::hermite::{gauss_hermite, normalized_hermite};
use crate::numerics::phi;
use crate::numerics::quadrature::integrate_pieces;

/// How `a_k = E[f(Z) H_k(Z)]` is computed.
#[derive(Debug, Clone, PartialEq)]
pub enum CoeffMethod {
    /// Gauss–Hermite rule of the given order (at least `4K`).
    GaussHermite { order: usize },
    /// Adaptive Gauss–Kronrod on `[−L, L]` split at the given discontinuities.
    Breakpoints { points: Vec<f64>, half_width: f64, tol: f64 },
}

/// `[a_0, ..., a_K]` of `f` in the normalized Hermite basis. Fails when the
/// coefficients carry more energy than `E[f(Z)²]` (Bessel's inequality), which
/// signals an inadequate rule.
pub fn hermite_coeffs<F: Fn(f64) -> f64>(f: F, kmax: usize, method: &CoeffMethod) -> Result<Vec<f64>> {
    let (coeffs, energy) = match method {
        CoeffMethod::GaussHermite { order } => {
            if *order < 4 * kmax.max(1) {
                return Err(Error::Quadrature(format!("order {order} is below 4K = {}", 4 * kmax.max(1))));
            }
            let (x, w) = gauss_hermite(*order);
            let mut a = vec![0.0; kmax + 1];
            let mut energy = 0.0;
            for (&xi, &wi) in x.iter().zip(&w) {
                let fx = f(xi);
                energy += wi * fx * fx;
                for (ak, hk) in a.iter_mut().zip(normalized_hermite(kmax, xi)) {
                    *ak += wi * fx * hk;
                }
            }
            (a, energy)
        }
        CoeffMethod::Breakpoints { points, half_width, tol } => {
            let l = *half_width;
            if !(l > 0.0) {
                return Err(domain("half width must be positive"));
            }
            let mut pts: Vec<f64> = points.iter().copied().filter(|p| p.abs() < l).collect();
            pts.extend([-l, l]);
            let a = (0..=kmax)
                .map(|k| integrate_pieces(|x| f(x) * normalized_hermite(k, x)[k] * phi(x), &pts, *tol))
                .collect::<Result<Vec<_>>>()?;
            let energy = integrate_pieces(|x| f(x).powi(2) * phi(x), &pts, *tol)?;
            (a, energy)
        }
    };
    let mass: f64 = coeffs.iter().map(|a| a * a).sum();
    if mass > energy * (1.0 + 1e-8) + 1e-10 {
        return Err(Error::Quadrature(format!("coefficient mass {mass} exceeds E[f^2] = {energy}")));
    }
    Ok(coeffs)
}

/// `E[f(W) g(Z)] = Σ a_k b_k ζ^k` for standard normals with correlation ζ.
pub fn hermite_cross_moment(a: &[f64], b: &[f64], zeta: f64) -> Result<f64> {
    if !(zeta.abs() <= 1.0) {
        return Err(domain(format!("correlation must lie in [-1, 1], got {zeta}")));
    }
    Ok(a.iter().zip(b).enumerate().map(|(k, (x, y))| x * y * zeta.powi(k as i32)).sum())
}
