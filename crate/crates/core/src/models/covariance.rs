use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::sq::SparseDirection;

pub const MAX_DENSE_DIM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovKind {
    Identity,
    Diagonal,
    Dense,
}

/// SPD covariance with a structural tag.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Identity(usize),
    Diagonal(Vec<f64>),
    Dense(Box<DenseCov>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseCov {
    sigma: DMatrix<f64>,
    chol: DMatrix<f64>,
    inv: DMatrix<f64>,
}

impl Covariance {
    pub fn identity(d: usize) -> Self {
        Covariance::Identity(d)
    }

    pub fn diagonal(diag: Vec<f64>) -> Result<Self> {
        if diag.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::NotSpd);
        }
        Ok(Covariance::Diagonal(diag))
    }

    /// Dense SPD matrix (d ≤ 64), factored once.
    pub fn dense(sigma: DMatrix<f64>) -> Result<Self> {
        let d = sigma.nrows();
        if sigma.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: sigma.ncols() });
        }
        if d > MAX_DENSE_DIM {
            return Err(domain(format!("dense covariance supported for d <= {MAX_DENSE_DIM}, got {d}")));
        }
        if (&sigma - sigma.transpose()).amax() > 1e-12 * sigma.amax().max(1.0) {
            return Err(Error::NotSpd);
        }
        let chol = sigma.clone().cholesky().ok_or(Error::NotSpd)?;
        let inv = chol.inverse();
        Ok(Covariance::Dense(Box::new(DenseCov { chol: chol.l(), sigma, inv })))
    }

    pub fn dim(&self) -> usize {
        match self {
            Covariance::Identity(d) => *d,
            Covariance::Diagonal(v) => v.len(),
            Covariance::Dense(c) => c.sigma.nrows(),
        }
    }

    pub fn kind(&self) -> CovKind {
        match self {
            Covariance::Identity(_) => CovKind::Identity,
            Covariance::Diagonal(_) => CovKind::Diagonal,
            Covariance::Dense(_) => CovKind::Dense,
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            Covariance::Identity(_) => f64::from(u8::from(i == j)),
            Covariance::Diagonal(v) => {
                if i == j {
                    v[i]
                } else {
                    0.0
                }
            }
            Covariance::Dense(c) => c.sigma[(i, j)],
        }
    }

    pub fn variance(&self, j: usize) -> f64 {
        self.entry(j, j)
    }

    /// Σ⁻¹v for a sparse v.
    pub fn inv_apply(&self, v: &SparseDirection) -> SparseDirection {
        match self {
            Covariance::Identity(_) => v.clone(),
            Covariance::Diagonal(diag) => {
                SparseDirection::new(v.idx.clone(), v.idx.iter().zip(&v.w).map(|(&i, &x)| x / diag[i]).collect())
            }
            Covariance::Dense(c) => {
                let d = c.sigma.nrows();
                let mut out = vec![0.0; d];
                for (r, o) in out.iter_mut().enumerate() {
                    *o = v.idx.iter().zip(&v.w).map(|(&i, &x)| c.inv[(r, i)] * x).sum();
                }
                SparseDirection::from_dense(&out)
            }
        }
    }

    /// wᵀΣw.
    pub fn quad(&self, w: &SparseDirection) -> f64 {
        match self {
            Covariance::Identity(_) => w.w.iter().map(|x| x * x).sum(),
            Covariance::Diagonal(diag) => w.idx.iter().zip(&w.w).map(|(&i, &x)| diag[i] * x * x).sum(),
            Covariance::Dense(c) => {
                let mut acc = 0.0;
                for (&i, &a) in w.idx.iter().zip(&w.w) {
                    for (&j, &b) in w.idx.iter().zip(&w.w) {
                        acc += a * b * c.sigma[(i, j)];
                    }
                }
                acc
            }
        }
    }

    /// vᵀΣ⁻¹v.
    pub fn inv_quad(&self, v: &SparseDirection) -> f64 {
        let w = self.inv_apply(v);
        let dense_v = v.to_dense(self.dim());
        w.dot(&dense_v)
    }

    /// (Σ⁻¹)_{SS}.
    pub fn inv_block(&self, support: &[usize]) -> DMatrix<f64> {
        let s = support.len();
        DMatrix::from_fn(s, s, |a, b| {
            let (i, j) = (support[a], support[b]);
            match self {
                Covariance::Identity(_) => f64::from(u8::from(i == j)),
                Covariance::Diagonal(diag) => {
                    if i == j {
                        1.0 / diag[i]
                    } else {
                        0.0
                    }
                }
                Covariance::Dense(c) => c.inv[(i, j)],
            }
        })
    }

    /// Replaces standard normal `z` by `Lz` with `LLᵀ = Σ`.
    pub fn color(&self, z: &mut [f64]) {
        match self {
            Covariance::Identity(_) => {}
            Covariance::Diagonal(diag) => z.iter_mut().zip(diag).for_each(|(x, v)| *x *= v.sqrt()),
            Covariance::Dense(c) => {
                let lz = &c.chol * DVector::from_column_slice(z);
                z.copy_from_slice(lz.as_slice());
            }
        }
    }

    /// (smallest, largest) eigenvalue.
    pub fn eigen_range(&self) -> (f64, f64) {
        match self {
            Covariance::Identity(_) => (1.0, 1.0),
            Covariance::Diagonal(v) => v.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x))),
            Covariance::Dense(c) => {
                let e = SymmetricEigen::new(c.sigma.clone()).eigenvalues;
                (e.min(), e.max())
            }
        }
    }

    /// Checks the eigenvalues lie in `[lo, hi]`.
    pub fn check_eigen_bounds(&self, lo: f64, hi: f64) -> Result<()> {
        let (a, b) = self.eigen_range();
        if a < lo || b > hi {
            return Err(domain(format!("eigenvalues [{a}, {b}] outside [{lo}, {hi}]")));
        }
        Ok(())
    }
}
