//! Normalized (probabilists') Hermite polynomials and Gauss–Hermite rules.
//!
//! `H_k = He_k / sqrt(k!)` is orthonormal under the standard normal weight.

use nalgebra::{DMatrix, SymmetricEigen};

/// `[H_0(x), ..., H_kmax(x)]`.
pub fn normalized_hermite(kmax: usize, x: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(kmax + 1);
    h.push(1.0);
    if kmax >= 1 {
        h.push(x);
    }
    for k in 1..kmax {
        let next = (x * h[k] - (k as f64).sqrt() * h[k - 1]) / ((k + 1) as f64).sqrt();
        h.push(next);
    }
    h
}

/// Gauss–Hermite rule for the standard normal weight (weights sum to one),
/// built with the Golub–Welsch eigenvalue method. Nodes are ascending.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let mut jac = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = (k as f64).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_moments() {
        let (x, w) = gauss_hermite(20);
        let m = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-13);
        assert!((m(2) - 1.0).abs() < 1e-12);
        assert!((m(4) - 3.0).abs() < 1e-11);
        assert!((m(6) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn orthonormal() {
        let (x, w) = gauss_hermite(30);
        for j in 0..8 {
            for k in 0..8 {
                let ip: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(&x, &w)| {
                        let h = normalized_hermite(8, x);
                        w * h[j] * h[k]
                    })
                    .sum();
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-10, "{j},{k}: {ip}");
            }
        }
    }
}
