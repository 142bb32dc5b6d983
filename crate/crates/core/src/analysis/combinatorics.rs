use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::models::{binomial, enumerate_gs};

/// Sizes of the overlap classes `C_j(v) = {v′ ∈ G(s) : |⟨v, v′⟩| = s − j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CjTable {
    pub d: usize,
    pub s: usize,
    /// `|C_j|` for `j = 0..=s`.
    pub sizes: Vec<u128>,
    /// `M(k)` for `k = −s..=s`, stored at `k + s`.
    pub m: Vec<u128>,
}

impl CjTable {
    /// `M(k)`, the number of `v′` with `⟨v, v′⟩ = k`.
    pub fn m_at(&self, k: i64) -> u128 {
        let i = k + self.s as i64;
        if i < 0 || i as usize >= self.m.len() {
            0
        } else {
            self.m[i as usize]
        }
    }

    pub fn total(&self) -> u128 {
        self.sizes.iter().sum()
    }
}

fn overflow(what: &str) -> Error {
    Error::Overflow(format!("{what} exceeds u128"))
}

/// `N_{a,b} = C(s,a) C(s−a,b) C(d−s, s−a−b) 2^{s−a−b}`: `a` shared coordinates with
/// equal sign, `b` with opposite sign, the rest outside `supp(v)`.
fn n_ab(d: usize, s: usize, a: usize, b: usize) -> Result<u128> {
    let rest = s - a - b;
    let parts = [
        binomial(s as u64, a as u64),
        binomial((s - a) as u64, b as u64),
        binomial((d - s) as u64, rest as u64),
        1u128.checked_shl(rest as u32),
    ];
    parts.iter().try_fold(1u128, |acc, p| acc.checked_mul(p.ok_or_else(|| overflow("N_ab"))?).ok_or_else(|| overflow("N_ab")))
}

pub fn cj_table(d: usize, s: usize) -> Result<CjTable> {
    if s == 0 || s > d {
        return Err(domain(format!("need 1 <= s <= d, got s={s}, d={d}")));
    }
    let mut m = vec![0u128; 2 * s + 1];
    for a in 0..=s {
        for b in 0..=s - a {
            let slot = &mut m[a + s - b];
            *slot = slot.checked_add(n_ab(d, s, a, b)?).ok_or_else(|| overflow("M(k)"))?;
        }
    }
    let sizes = (0..=s)
        .map(|j| if j == s { Ok(m[s]) } else { m[2 * s - j].checked_add(m[j]).ok_or_else(|| overflow("|C_j|")) })
        .collect::<Result<Vec<_>>>()?;
    Ok(CjTable { d, s, sizes, m })
}

/// Brute-force `|C_j|` relative to the first element of G(s).
pub fn cj_counts_by_enumeration(d: usize, s: usize, cap: u128) -> Result<Vec<u128>> {
    let all = enumerate_gs(d, s, cap)?;
    let v = &all[0];
    let mut sizes = vec![0u128; s + 1];
    for w in &all {
        sizes[s - v.inner(w).unsigned_abs() as usize] += 1;
    }
    Ok(sizes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    /// `|C_{j+1}| / |C_j|` for `j = 0..s`.
    pub ratios: Vec<f64>,
    /// `d / (2s²)`.
    pub bound: f64,
    pub holds: bool,
}

pub fn growth_check(table: &CjTable) -> GrowthReport {
    let ratios: Vec<f64> = table.sizes.windows(2).map(|w| w[1] as f64 / w[0] as f64).collect();
    let bound = table.d as f64 / (2.0 * (table.s * table.s) as f64);
    let holds = ratios.iter().all(|&r| r >= bound);
    GrowthReport { ratios, bound, holds }
}
