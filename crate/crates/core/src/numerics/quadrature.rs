//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 60;

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (i, &x) in XGK[..7].iter().enumerate() {
        let pair = f(c - h * x) + f(c + h * x);
        kron += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

const MAX_INTERVALS: u32 = 200_000;

struct Budget {
    floor: f64,
    left: u32,
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32, budget: &mut Budget) -> Result<f64> {
    let (val, err) = gk15(f, a, b);
    if !val.is_finite() {
        return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
    }
    // Below the floor the error estimate is roundoff.
    if err <= tol.max(budget.floor).max(4.0 * f64::EPSILON * val.abs()) {
        return Ok(val);
    }
    if depth >= MAX_DEPTH || budget.left == 0 {
        return Err(Error::Quadrature(format!(
            "no convergence on [{a}, {b}] (error estimate {err:.3e}, tolerance {tol:.3e})"
        )));
    }
    budget.left -= 1;
    let m = 0.5 * (a + b);
    Ok(adapt(f, a, m, 0.5 * tol, depth + 1, budget)? + adapt(f, m, b, 0.5 * tol, depth + 1, budget)?)
}

fn root<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (scale, _) = gk15(f, a, b);
    let mut budget = Budget { floor: 64.0 * f64::EPSILON * scale.abs(), left: MAX_INTERVALS };
    adapt(f, a, b, tol, 0, &mut budget)
}

/// ∫_a^b f to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Quadrature("infinite interval".into()));
    }
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, tol).map(|v| -v);
    }
    root(&f, a, b, tol)
}

/// Integral over consecutive segments of the sorted `points`, so kinks and jumps
/// sit on segment boundaries.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: f64) -> Result<f64> {
    let mut pts: Vec<f64> = points.to_vec();
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    let segs = pts.len().saturating_sub(1).max(1) as f64;
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += root(&f, w[0], w[1], tol / segs)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_gaussian() {
        let v = integrate(|x| x * x * x - 2.0 * x, -1.0, 3.0, 1e-14).unwrap();
        assert!((v - (81.0 / 4.0 - 9.0 - 0.25 + 1.0)).abs() < 1e-12);
        let g = integrate_pieces(crate::numerics::phi, &[-12.0, -3.0, 0.0, 3.0, 12.0], 1e-14).unwrap();
        assert!((g - 1.0).abs() < 1e-13);
    }

    #[test]
    fn jump_is_handled_with_breakpoints() {
        let v = integrate_pieces(|x| if x < 0.3 { 1.0 } else { 2.0 }, &[0.0, 0.3, 1.0], 1e-13).unwrap();
        assert!((v - 1.7).abs() < 1e-13);
    }
}
