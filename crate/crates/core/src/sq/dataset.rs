use crate::error::{Error, Result};

/// `n` sample points of dimension `dim`, stored column-major so that projections
/// over the whole sample vectorise.
///
/// Regression samples use the layout `[y, x_1, ..., x_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    dim: usize,
    cols: Vec<f64>,
}

impl Dataset {
    pub fn from_columns(n: usize, dim: usize, cols: Vec<f64>) -> Result<Self> {
        if cols.len() != n * dim {
            return Err(Error::DimensionMismatch { expected: n * dim, got: cols.len() });
        }
        Ok(Dataset { n, dim, cols })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        let mut cols = vec![0.0; n * dim];
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            for (j, &v) in r.iter().enumerate() {
                cols[j * n + i] = v;
            }
        }
        Ok(Dataset { n, dim, cols })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.cols[j * self.n..(j + 1) * self.n]
    }

    pub fn row_into(&self, i: usize, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend((0..self.dim).map(|j| self.cols[j * self.n + i]));
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut r = Vec::with_capacity(self.dim);
        self.row_into(i, &mut r);
        r
    }
}
