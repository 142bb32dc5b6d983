use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use crate::error::Result;
use crate::exec::{stream_id, Exec};
use crate::sq::{BoundMode, BoundedQuery, Dataset, EvalScratch, Oracle, QueryKernel, SparseDirection};

/// `Z_q = n⁻¹ Σ q(x_i)` with clipping at the query bound.
pub fn honest_respond(query: &BoundedQuery, data: &Dataset) -> Result<f64> {
    query.sample_mean(data, BoundMode::Clip)
}

/// Answers every query with its sample mean over a fixed dataset. Batches are
/// evaluated data-parallel across queries.
pub struct HonestOracle<'a> {
    data: &'a Dataset,
    mode: BoundMode,
    exec: Exec,
}

impl<'a> HonestOracle<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        HonestOracle { data, mode: BoundMode::Clip, exec: Exec::default() }
    }

    pub fn strict(mut self) -> Self {
        self.mode = BoundMode::Strict;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

impl Oracle for HonestOracle<'_> {
    fn respond(&mut self, query: &BoundedQuery) -> Result<f64> {
        query.sample_mean(self.data, self.mode)
    }

    /// Kernels that are even in `w` are evaluated once per `±w` pair; the
    /// sign flip is exact in floating point, so answers are unchanged.
    fn respond_batch(&mut self, queries: &[BoundedQuery]) -> Result<Vec<f64>> {
        let (data, mode) = (self.data, self.mode);
        let mut seen: HashMap<u64, usize, BuildHasherDefault<Prehashed>> = HashMap::default();
        let mut reps = Vec::new();
        let mut slot = Vec::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            let key = mirror_fingerprint(q);
            let hit = key.and_then(|k| seen.get(&k)).filter(|&&r| mirror_eq(&queries[reps[r]], q));
            match hit {
                Some(&r) => slot.push(r),
                None => {
                    if let Some(k) = key {
                        seen.entry(k).or_insert(reps.len());
                    }
                    slot.push(reps.len());
                    reps.push(i);
                }
            }
        }
        let values: Vec<f64> = self
            .exec
            .map_init(reps.len(), EvalScratch::default, |buf, k| queries[reps[k]].sample_mean_with(data, mode, buf))
            .into_iter()
            .collect::<Result<_>>()?;
        Ok(slot.into_iter().map(|k| values[k]).collect())
    }
}

/// Hasher for keys that are already well mixed.
#[derive(Default)]
struct Prehashed(u64);

impl Hasher for Prehashed {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = self.0.rotate_left(8) ^ u64::from(b);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = v;
    }
}

/// Kernel kind, direction and scalar parameters of a query that is even in `w`.
fn even_parts(q: &BoundedQuery) -> Option<(u64, &SparseDirection, [f64; 2])> {
    match q.kernel() {
        QueryKernel::ProjSquare { w, center, scale, radius } if *center == 0.0 => Some((0, w, [*scale, *radius])),
        QueryKernel::RegSecondMoment { w, y_radius, z_radius } => Some((1, w, [*y_radius, *z_radius])),
        _ => None,
    }
}

fn flipped(w: &SparseDirection) -> bool {
    w.w.first().is_some_and(|x| x.is_sign_negative())
}

/// Hash of the sign-canonical form, identical for `q(w)` and `q(−w)`.
fn mirror_fingerprint(q: &BoundedQuery) -> Option<u64> {
    let (kind, w, params) = even_parts(q)?;
    let flip = flipped(w);
    let mut parts = vec![kind, q.bound().to_bits(), params[0].to_bits(), params[1].to_bits()];
    for (&j, &x) in w.idx.iter().zip(&w.w) {
        parts.push(j as u64);
        parts.push(if flip { -x } else { x }.to_bits());
    }
    Some(stream_id(&parts))
}

fn mirror_eq(a: &BoundedQuery, b: &BoundedQuery) -> bool {
    let (Some((ka, wa, pa)), Some((kb, wb, pb))) = (even_parts(a), even_parts(b)) else { return false };
    let (fa, fb) = (flipped(wa), flipped(wb));
    ka == kb
        && a.bound().to_bits() == b.bound().to_bits()
        && pa.map(f64::to_bits) == pb.map(f64::to_bits)
        && wa.idx == wb.idx
        && wa.w.iter().zip(&wb.w).all(|(&x, &y)| (if fa { -x } else { x }).to_bits() == (if fb { -y } else { y }).to_bits())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let data = Dataset::from_rows(&[vec![0.1, 5.0], vec![-0.2, 1.0], vec![0.4, 2.0]]).unwrap();
        let c = BoundedQuery::custom("c", 1.0, |_| 0.75).unwrap();
        assert_eq!(honest_respond(&c, &data).unwrap(), 0.75);
        let x1 = BoundedQuery::custom("x1", 1.0, |x| x[0]).unwrap();
        assert!((honest_respond(&x1, &data).unwrap() - 0.1).abs() < 1e-15);
        let empty = Dataset::from_rows(&[]).unwrap();
        assert!(honest_respond(&c, &empty).is_err());
    }

    #[test]
    fn batch_equals_single() {
        let data = Dataset::from_rows(&(0..40).map(|i| vec![i as f64 / 40.0]).collect::<Vec<_>>()).unwrap();
        let qs: Vec<_> = (0..5).map(|k| BoundedQuery::custom(format!("p{k}"), 1.0, move |x| x[0].powi(k)).unwrap()).collect();
        for exec in [Exec::Sequential, Exec::Parallel] {
            let mut o = HonestOracle::new(&data).with_exec(exec);
            let batch = o.respond_batch(&qs).unwrap();
            for (q, b) in qs.iter().zip(batch) {
                assert_eq!(o.respond(q).unwrap().to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn mirrored_and_prefix_shared_batches_are_exact() {
        let rows: Vec<Vec<f64>> = (0..97)
            .map(|i| (0..5).map(|j| ((i * 13 + j * 7) % 17) as f64 / 4.1 - 2.0).collect())
            .collect();
        let data = Dataset::from_rows(&rows).unwrap();
        let mut qs = Vec::new();
        for (k, w) in [[1.0, 1.0, -1.0], [1.0, 1.0, 1.0], [-1.0, -1.0, 1.0], [1.0, -0.3, 0.7], [-1.0, 0.3, -0.7]]
            .iter()
            .enumerate()
        {
            let w = SparseDirection::new(vec![0, 2, 4], w.to_vec());
            let sq = QueryKernel::ProjSquare { w: w.clone(), center: 0.0, scale: 0.4, radius: 2.5 };
            let lin = QueryKernel::ProjLinear { w: w.clone(), radius: 2.5 };
            let reg = QueryKernel::RegSecondMoment { w: SparseDirection::new(vec![1, 3], w.w[..2].to_vec()), y_radius: 1.5, z_radius: 2.0 };
            for (name, kern) in [("s", sq), ("l", lin), ("r", reg)] {
                qs.push(BoundedQuery::new(format!("{name}{k}"), 3.0, crate::sq::FamilyTag::Custom, kern).unwrap());
            }
        }
        let batch = HonestOracle::new(&data).with_exec(Exec::Sequential).respond_batch(&qs).unwrap();
        for (q, b) in qs.iter().zip(batch) {
            assert_eq!(honest_respond(q, &data).unwrap().to_bits(), b.to_bits(), "{}", q.id());
        }
    }
}
