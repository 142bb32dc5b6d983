//! Gaussian special functions, truncated moments and quadrature.

pub mod hermite;
pub mod quadrature;

use libm::erfc;

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn phi(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Upper tail Q(t) = P(Z > t).
pub fn upper_tail(t: f64) -> f64 {
    0.5 * erfc(t / std::f64::consts::SQRT_2)
}

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    upper_tail(-x)
}

/// P(a < Z < b) without cancellation in either tail.
pub fn interval_prob(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        upper_tail(a) - upper_tail(b)
    } else if b <= 0.0 {
        upper_tail(-b) - upper_tail(-a)
    } else {
        1.0 - upper_tail(b) - upper_tail(-a)
    }
}

fn x_phi(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        x * phi(x)
    }
}

/// `[∫ N(u; m, sd²) du, ∫ u N du, ∫ u² N du]` over `lo < u < hi`.
/// Infinite endpoints are allowed.
pub fn normal_partial_moments(m: f64, sd: f64, lo: f64, hi: f64) -> [f64; 3] {
    let a = (lo - m) / sd;
    let b = (hi - m) / sd;
    let i0 = interval_prob(a, b);
    let j1 = phi(a) - phi(b);
    let j2 = i0 + x_phi(a) - x_phi(b);
    [i0, m * i0 + sd * j1, m * m * i0 + 2.0 * m * sd * j1 + sd * sd * j2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tails() {
        assert_relative_eq!(upper_tail(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(upper_tail(1.0), 0.158_655_253_931_457_05, epsilon = 1e-15);
        // Q(10) from tables
        assert_relative_eq!(upper_tail(10.0), 7.619_853_024_160_527e-24, max_relative = 1e-12);
        assert_relative_eq!(interval_prob(9.0, 10.0), upper_tail(9.0) - upper_tail(10.0), max_relative = 1e-12);
    }

    #[test]
    fn partial_moments_match_quadrature() {
        for &(m, sd, lo, hi) in &[(0.3, 1.2, -2.0, 1.5), (-1.0, 0.5, -0.2, 4.0), (2.0, 1.0, -5.0, 5.0)] {
            let got = normal_partial_moments(m, sd, lo, hi);
            for (k, g) in got.iter().enumerate() {
                let want = quadrature::integrate(
                    |u| u.powi(k as i32) * phi((u - m) / sd) / sd,
                    lo,
                    hi,
                    1e-13,
                )
                .unwrap();
                assert!((g - want).abs() < 1e-12, "k={k} {g} vs {want}");
            }
        }
        let full = normal_partial_moments(1.5, 2.0, f64::NEG_INFINITY, f64::INFINITY);
        assert_relative_eq!(full[2], 1.5 * 1.5 + 4.0, epsilon = 1e-13);
    }
}
