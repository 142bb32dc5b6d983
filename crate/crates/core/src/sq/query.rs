use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{domain, Error, Result};

/// Registered analytic families. Anything else is `Custom`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyTag {
    GmmExhaustive,
    GmmDiagonal,
    GmmNetStage1,
    GmmNetStage2,
    RegExhaustive,
    RegCoordinate,
    SqGradient,
    Custom,
}

/// How an evaluation outside `[-M, M]` is handled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum BoundMode {
    #[default]
    Clip,
    Strict,
}

/// A sparse linear functional `x ↦ Σ_k w_k x_{idx_k}` over covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDirection {
    pub idx: Vec<usize>,
    pub w: Vec<f64>,
}

impl SparseDirection {
    pub fn new(idx: Vec<usize>, w: Vec<f64>) -> Self {
        assert_eq!(idx.len(), w.len());
        SparseDirection { idx, w }
    }

    /// Drops exact zeros from a dense vector.
    pub fn from_dense(v: &[f64]) -> Self {
        let (idx, w) = v.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(i, &x)| (i, x)).unzip();
        SparseDirection { idx, w }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.w).map(|(&i, &w)| w * x[i]).sum()
    }

    pub fn to_dense(&self, d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        for (&i, &w) in self.idx.iter().zip(&self.w) {
            v[i] = w;
        }
        v
    }

    pub fn max_index(&self) -> Option<usize> {
        self.idx.iter().copied().max()
    }
}

/// Reusable buffers for column-wise query evaluation. Projections are kept per
/// prefix of `(index, weight)` terms, so consecutive directions that share a
/// prefix only pay for the terms after it. Results are bitwise identical to a
/// fresh projection.
#[derive(Debug, Default)]
pub struct EvalScratch<'a> {
    source: Option<(&'a Dataset, usize)>,
    keys: Vec<(usize, u64)>,
    levels: Vec<Vec<f64>>,
    zeros: Vec<f64>,
    row: Vec<f64>,
    values: Vec<f64>,
}

/// Cached partial sum, last column, last weight.
type Prefix<'s, 'a> = (Option<&'s [f64]>, &'a [f64], f64);

impl<'a> EvalScratch<'a> {
    /// `out[i] = Σ_k w_k · data[offset + idx_k][i]`, summed left to right.
    fn project(&mut self, w: &SparseDirection, data: &'a Dataset, offset: usize) -> &[f64] {
        if w.idx.is_empty() {
            self.zeros.clear();
            self.zeros.resize(data.n(), 0.0);
            return &self.zeros;
        }
        self.project_terms(&w.idx, &w.w, data, offset)
    }

    fn project_terms(&mut self, idx: &[usize], w: &[f64], data: &'a Dataset, offset: usize) -> &[f64] {
        if !matches!(self.source, Some((d, o)) if std::ptr::eq(d, data) && o == offset) {
            self.source = Some((data, offset));
            self.keys.clear();
        }
        let shared = self
            .keys
            .iter()
            .zip(idx.iter().zip(w))
            .take_while(|(&(j, bits), (&i, x))| j == i && bits == x.to_bits())
            .count();
        self.keys.truncate(shared);
        if self.levels.len() < idx.len() {
            self.levels.resize_with(idx.len(), Vec::new);
        }
        for k in shared..idx.len() {
            let (done, rest) = self.levels.split_at_mut(k);
            let out = &mut rest[0];
            out.clear();
            let col = data.column(idx[k] + offset);
            let wk = w[k];
            if k == 0 {
                out.extend(col.iter().map(|&x| 0.0 + wk * x));
            } else {
                out.extend(done[k - 1].iter().zip(col).map(|(&p, &x)| p + wk * x));
            }
            self.keys.push((idx[k], wk.to_bits()));
        }
        &self.levels[idx.len() - 1]
    }

    /// Everything but the last term of the projection: the cached partial sum
    /// (`None` for a single term), the last column and its weight.
    fn prefix(&mut self, w: &SparseDirection, data: &'a Dataset, offset: usize) -> Option<Prefix<'_, 'a>> {
        let (&last, &wk) = (w.idx.last()?, w.w.last()?);
        let col = data.column(last + offset);
        let k = w.idx.len() - 1;
        if k == 0 {
            return Some((None, col, wk));
        }
        Some((Some(self.project_terms(&w.idx[..k], &w.w[..k], data, offset)), col, wk))
    }
}

/// One pass over `u_i = prev_i + w_k col_i` (or `0 + w_k col_i`) that applies `f`
/// and sums in lanes, in the same order as [`lane_sum`]. `None` when some value
/// needs clipping or is NaN.
///
/// On x86-64 with AVX2 the loop is compiled a second time with wider vectors.
/// No fused multiply-add is enabled, so results are bitwise equal.
#[inline(always)]
fn fused_lanes<K: Pointwise>(prev: Option<&[f64]>, col: &[f64], wk: f64, aux: &[f64], bound: f64, f: K) -> Option<f64> {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: AVX2 support was just detected.
        return unsafe { fused_lanes_avx2(prev, col, wk, aux, bound, f) };
    }
    fused_lanes_generic(prev, col, wk, aux, bound, f)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn fused_lanes_avx2<K: Pointwise>(prev: Option<&[f64]>, col: &[f64], wk: f64, aux: &[f64], bound: f64, f: K) -> Option<f64> {
    fused_lanes_generic(prev, col, wk, aux, bound, f)
}

#[inline(always)]
fn fused_lanes_generic<K: Pointwise>(prev: Option<&[f64]>, col: &[f64], wk: f64, aux: &[f64], bound: f64, f: K) -> Option<f64> {
    let mut acc = [0.0f64; LANES];
    // Largest |value| per lane. A NaN never raises it but poisons `acc`.
    let mut peak = [0.0f64; LANES];
    let n = col.len();
    let full = n - n % LANES;
    let mut step = |u: f64, a: f64, k: usize| {
        let v = f.at(u, a);
        acc[k] += v;
        let m = v.abs();
        peak[k] = if m > peak[k] { m } else { peak[k] };
    };
    match prev {
        Some(p) => {
            for ((pc, cc), ac) in p[..full].chunks_exact(LANES).zip(col[..full].chunks_exact(LANES)).zip(aux[..full].chunks_exact(LANES)) {
                for k in 0..LANES {
                    step(pc[k] + wk * cc[k], ac[k], k);
                }
            }
            for i in full..n {
                step(p[i] + wk * col[i], aux[i], i - full);
            }
        }
        None => {
            for (cc, ac) in col[..full].chunks_exact(LANES).zip(aux[..full].chunks_exact(LANES)) {
                for k in 0..LANES {
                    step(0.0 + wk * cc[k], ac[k], k);
                }
            }
            for i in full..n {
                step(0.0 + wk * col[i], aux[i], i - full);
            }
        }
    }
    let sum = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    if sum.is_nan() || peak.iter().any(|&m| m > bound) {
        return None;
    }
    Some(sum)
}

/// Per-element kernels of the fused pass: `u` is the projection, `a` the
/// auxiliary column. A trait rather than closures so that the AVX2 copy inlines
/// them.
trait Pointwise: Copy {
    fn at(self, u: f64, a: f64) -> f64;
}

#[derive(Clone, Copy)]
struct Square {
    c: f64,
    sc: f64,
    r: f64,
}

impl Pointwise for Square {
    #[inline(always)]
    fn at(self, u: f64, _: f64) -> f64 {
        if u.abs() <= self.r {
            self.sc * (u - self.c) * (u - self.c)
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy)]
struct Linear {
    r: f64,
}

impl Pointwise for Linear {
    #[inline(always)]
    fn at(self, u: f64, _: f64) -> f64 {
        if u.abs() <= self.r {
            u
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy)]
struct SecondMoment {
    yr: f64,
    zr: f64,
}

impl Pointwise for SecondMoment {
    #[inline(always)]
    fn at(self, z: f64, y: f64) -> f64 {
        if y.abs() <= self.yr && z.abs() <= self.zr {
            y * y * (z * z - 1.0)
        } else {
            0.0
        }
    }
}

const LANES: usize = 8;

/// Sum with `LANES` interleaved accumulators (element `i` goes to lane `i mod
/// LANES`), lanes combined pairwise. Every sample mean uses this order.
pub fn lane_sum(values: &[f64]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let mut chunks = values.chunks_exact(LANES);
    for c in &mut chunks {
        for k in 0..LANES {
            acc[k] += c[k];
        }
    }
    for (k, &v) in chunks.remainder().iter().enumerate() {
        acc[k] += v;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

pub type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The function a query computes. Projection kernels read the covariates directly;
/// regression and gradient kernels expect `[y, x...]`.
#[derive(Clone)]
pub enum QueryKernel {
    /// `scale · (u − center)²` on `|u| ≤ radius`, zero elsewhere, with `u = wᵀx`.
    ProjSquare { w: SparseDirection, center: f64, scale: f64, radius: f64 },
    /// `u` on `|u| ≤ radius`, zero elsewhere, with `u = wᵀx`.
    ProjLinear { w: SparseDirection, radius: f64 },
    /// `y² (z² − 1)` on `|y| ≤ y_radius, |z| ≤ z_radius`, with `z = wᵀx`.
    RegSecondMoment { w: SparseDirection, y_radius: f64, z_radius: f64 },
    /// `∂_j ½(y − θᵀx)² = −(y − θᵀx) x_j`.
    SqGradient { theta: Arc<Vec<f64>>, j: usize },
    Custom(CustomFn),
}

impl fmt::Debug for QueryKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryKernel::ProjSquare { w, center, scale, radius } => f
                .debug_struct("ProjSquare")
                .field("w", w)
                .field("center", center)
                .field("scale", scale)
                .field("radius", radius)
                .finish(),
            QueryKernel::ProjLinear { w, radius } => {
                f.debug_struct("ProjLinear").field("w", w).field("radius", radius).finish()
            }
            QueryKernel::RegSecondMoment { w, y_radius, z_radius } => f
                .debug_struct("RegSecondMoment")
                .field("w", w)
                .field("y_radius", y_radius)
                .field("z_radius", z_radius)
                .finish(),
            QueryKernel::SqGradient { j, .. } => f.debug_struct("SqGradient").field("j", j).finish(),
            QueryKernel::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A named real function on the sample space with `|q| ≤ bound`.
#[derive(Debug, Clone)]
pub struct BoundedQuery {
    id: Arc<str>,
    bound: f64,
    tag: FamilyTag,
    kernel: QueryKernel,
}

impl BoundedQuery {
    pub fn new(id: impl Into<Arc<str>>, bound: f64, tag: FamilyTag, kernel: QueryKernel) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(domain(format!("query bound must be positive and finite, got {bound}")));
        }
        Ok(BoundedQuery { id: id.into(), bound, tag, kernel })
    }

    pub fn custom(
        id: impl Into<Arc<str>>,
        bound: f64,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(id, bound, FamilyTag::Custom, QueryKernel::Custom(Arc::new(f)))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn shared_id(&self) -> Arc<str> {
        Arc::clone(&self.id)
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn tag(&self) -> FamilyTag {
        self.tag
    }

    pub fn kernel(&self) -> &QueryKernel {
        &self.kernel
    }

    /// Unclipped kernel value at one sample point.
    pub fn raw(&self, x: &[f64]) -> f64 {
        match &self.kernel {
            QueryKernel::ProjSquare { w, center, scale, radius } => {
                let u = w.dot(x);
                if u.abs() <= *radius {
                    scale * (u - center) * (u - center)
                } else {
                    0.0
                }
            }
            QueryKernel::ProjLinear { w, radius } => {
                let u = w.dot(x);
                if u.abs() <= *radius {
                    u
                } else {
                    0.0
                }
            }
            QueryKernel::RegSecondMoment { w, y_radius, z_radius } => {
                let y = x[0];
                let z = w.dot(&x[1..]);
                if y.abs() <= *y_radius && z.abs() <= *z_radius {
                    y * y * (z * z - 1.0)
                } else {
                    0.0
                }
            }
            QueryKernel::SqGradient { theta, j } => {
                let pred: f64 = theta.iter().zip(&x[1..]).map(|(t, v)| t * v).sum();
                -(x[0] - pred) * x[1 + j]
            }
            QueryKernel::Custom(f) => f(x),
        }
    }

    fn apply_bound(&self, v: f64, mode: BoundMode) -> Result<f64> {
        if v.abs() <= self.bound {
            return Ok(v);
        }
        match mode {
            BoundMode::Clip if v.is_nan() => Err(Error::BoundViolation { id: self.id.to_string(), value: v, bound: self.bound }),
            BoundMode::Clip => Ok(v.clamp(-self.bound, self.bound)),
            BoundMode::Strict => Err(Error::BoundViolation { id: self.id.to_string(), value: v, bound: self.bound }),
        }
    }

    /// Kernel value at one point with the bound enforced.
    pub fn eval(&self, x: &[f64], mode: BoundMode) -> Result<f64> {
        self.apply_bound(self.raw(x), mode)
    }

    /// Sample mean of the bounded query over `data`.
    pub fn sample_mean(&self, data: &Dataset, mode: BoundMode) -> Result<f64> {
        self.sample_mean_with(data, mode, &mut EvalScratch::default())
    }

    /// [`BoundedQuery::sample_mean`] reusing caller-owned buffers.
    pub fn sample_mean_with<'a>(&self, data: &'a Dataset, mode: BoundMode, scratch: &mut EvalScratch<'a>) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.check_dim(data.dim())?;
        if let Some(sum) = self.fused_sum(data, scratch) {
            return Ok(sum / data.n() as f64);
        }
        let mut values = std::mem::take(&mut scratch.values);
        values.clear();
        match &self.kernel {
            QueryKernel::ProjSquare { w, center, scale, radius } => {
                let f = |u: f64| if u.abs() <= *radius { scale * (u - center) * (u - center) } else { 0.0 };
                values.extend(scratch.project(w, data, 0).iter().map(|&u| f(u)));
            }
            QueryKernel::ProjLinear { w, radius } => {
                values.extend(scratch.project(w, data, 0).iter().map(|&u| if u.abs() <= *radius { u } else { 0.0 }));
            }
            QueryKernel::RegSecondMoment { w, y_radius, z_radius } => {
                let f = |z: f64, y: f64| {
                    if y.abs() <= *y_radius && z.abs() <= *z_radius {
                        y * y * (z * z - 1.0)
                    } else {
                        0.0
                    }
                };
                values.extend(scratch.project(w, data, 1).iter().zip(data.column(0)).map(|(&z, &y)| f(z, y)));
            }
            QueryKernel::SqGradient { theta, j } => {
                let pred = scratch.project(&SparseDirection::from_dense(theta), data, 1);
                let (y, xj) = (data.column(0), data.column(1 + j));
                values.extend(pred.iter().zip(y).zip(xj).map(|((&p, &y), &x)| -(y - p) * x));
            }
            QueryKernel::Custom(_) => {
                for i in 0..data.n() {
                    data.row_into(i, &mut scratch.row);
                    values.push(self.raw(&scratch.row));
                }
            }
        }
        let sum = self.bounded_sum(&mut values, mode);
        scratch.values = values;
        let sum = sum?;
        Ok(sum / data.n() as f64)
    }

    /// Single-pass sum for projection kernels when nothing needs clipping.
    fn fused_sum<'a>(&self, data: &'a Dataset, scratch: &mut EvalScratch<'a>) -> Option<f64> {
        let bound = self.bound;
        match &self.kernel {
            QueryKernel::ProjSquare { w, center, scale, radius } => {
                let (prev, col, wk) = scratch.prefix(w, data, 0)?;
                let (c, sc, r) = (*center, *scale, *radius);
                fused_lanes(prev, col, wk, col, bound, Square { c, sc, r })
            }
            QueryKernel::ProjLinear { w, radius } => {
                let (prev, col, wk) = scratch.prefix(w, data, 0)?;
                let r = *radius;
                fused_lanes(prev, col, wk, col, bound, Linear { r })
            }
            QueryKernel::RegSecondMoment { w, y_radius, z_radius } => {
                let (prev, col, wk) = scratch.prefix(w, data, 1)?;
                fused_lanes(prev, col, wk, data.column(0), bound, SecondMoment { yr: *y_radius, zr: *z_radius })
            }
            _ => None,
        }
    }

    /// Sum of the bounded values. Clipping is applied in place only when some
    /// value is out of range.
    fn bounded_sum(&self, values: &mut [f64], mode: BoundMode) -> Result<f64> {
        let bound = self.bound;
        if values.iter().fold(false, |out, v| out | !(v.abs() <= bound)) {
            for v in values.iter_mut() {
                *v = self.apply_bound(*v, mode)?;
            }
        }
        Ok(lane_sum(values))
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        let need = match &self.kernel {
            QueryKernel::ProjSquare { w, .. } | QueryKernel::ProjLinear { w, .. } => w.max_index().map_or(0, |m| m + 1),
            QueryKernel::RegSecondMoment { w, .. } => w.max_index().map_or(1, |m| m + 2),
            QueryKernel::SqGradient { theta, j } => (theta.len() + 1).max(j + 2),
            QueryKernel::Custom(_) => 0,
        };
        if dim < need {
            return Err(Error::DimensionMismatch { expected: need, got: dim });
        }
        Ok(())
    }
}
