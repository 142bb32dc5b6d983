//! Sign-support vectors G(s) = {v ∈ {−1,0,1}^d : ‖v‖₀ = s}.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub const DEFAULT_ENUM_CAP: u128 = 1_000_000;
pub const ENUM_CAP_ENV: &str = "SQLAB_ENUM_CAP";

/// Enumeration cap, overridable through `SQLAB_ENUM_CAP` (accepts `1e6` style).
pub fn enum_cap() -> u128 {
    std::env::var(ENUM_CAP_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|v| *v >= 1.0 && v.is_finite())
        .map_or(DEFAULT_ENUM_CAP, |v| v as u128)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSsv")]
pub struct SignSupportVector {
    entries: Vec<i8>,
    support: Vec<usize>,
}

#[derive(Deserialize)]
struct RawSsv {
    entries: Vec<i8>,
}

impl TryFrom<RawSsv> for SignSupportVector {
    type Error = Error;

    fn try_from(raw: RawSsv) -> Result<Self> {
        SignSupportVector::from_entries(raw.entries)
    }
}

impl Ord for SignSupportVector {
    fn cmp(&self, other: &Self) -> Ordering {
        self.entries.cmp(&other.entries)
    }
}

impl PartialOrd for SignSupportVector {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SignSupportVector {
    pub fn from_entries(entries: Vec<i8>) -> Result<Self> {
        if entries.iter().any(|e| !(-1..=1).contains(e)) {
            return Err(domain("sign-support entries must be in {-1, 0, 1}"));
        }
        let support = entries.iter().enumerate().filter(|(_, &e)| e != 0).map(|(i, _)| i).collect();
        Ok(SignSupportVector { entries, support })
    }

    /// Vector with the given sorted support and signs.
    pub fn from_support(d: usize, support: &[usize], signs: &[i8]) -> Result<Self> {
        if support.len() != signs.len() || support.iter().any(|&i| i >= d) {
            return Err(domain("support/sign mismatch"));
        }
        let mut e = vec![0i8; d];
        for (&i, &s) in support.iter().zip(signs) {
            if s != 1 && s != -1 {
                return Err(domain("signs must be ±1"));
            }
            e[i] = s;
        }
        let v = Self::from_entries(e)?;
        if v.support.len() != support.len() {
            return Err(domain("repeated support index"));
        }
        Ok(v)
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn d(&self) -> usize {
        self.entries.len()
    }

    pub fn s(&self) -> usize {
        self.support.len()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|&e| e as f64).collect()
    }

    /// ⟨v, w⟩ over the smaller support.
    pub fn inner(&self, other: &SignSupportVector) -> i64 {
        let (a, b) = if self.s() <= other.s() { (self, other) } else { (other, self) };
        a.support.iter().map(|&i| a.entries[i] as i64 * *b.entries.get(i).unwrap_or(&0) as i64).sum()
    }

    /// Uniform draw from G(s).
    pub fn random<R: Rng + ?Sized>(d: usize, s: usize, rng: &mut R) -> Result<Self> {
        if s == 0 || s > d {
            return Err(domain(format!("need 1 <= s <= d, got s={s}, d={d}")));
        }
        let mut support = rand::seq::index::sample(rng, d, s).into_vec();
        support.sort_unstable();
        let signs: Vec<i8> = (0..s).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        Self::from_support(d, &support, &signs)
    }
}

pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// |G(s)| = 2^s · C(d, s).
pub fn gs_size(d: usize, s: usize) -> Result<u128> {
    let c = binomial(d as u64, s as u64).ok_or_else(|| Error::Overflow(format!("C({d},{s})")))?;
    1u128
        .checked_shl(s as u32)
        .filter(|_| s < 127)
        .and_then(|p| p.checked_mul(c))
        .ok_or_else(|| Error::Overflow(format!("|G(s)| for d={d}, s={s}")))
}

/// All of G(s) in lexicographic order of the entry vectors (−1 < 0 < 1).
pub fn enumerate_gs(d: usize, s: usize, cap: u128) -> Result<Vec<SignSupportVector>> {
    if s == 0 || s > d {
        return Err(domain(format!("need 1 <= s <= d, got s={s}, d={d}")));
    }
    let size = gs_size(d, s)?;
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    let mut out = Vec::with_capacity(size as usize);
    let mut cur = vec![0i8; d];
    fill(&mut cur, 0, s, &mut out);
    Ok(out)
}

fn fill(cur: &mut Vec<i8>, pos: usize, left: usize, out: &mut Vec<SignSupportVector>) {
    if pos == cur.len() {
        if left == 0 {
            out.push(SignSupportVector::from_entries(cur.clone()).expect("valid entries"));
        }
        return;
    }
    let room = cur.len() - pos;
    for e in [-1i8, 0, 1] {
        if (e != 0 && left == 0) || (e == 0 && room == left) {
            continue;
        }
        cur[pos] = e;
        fill(cur, pos + 1, if e == 0 { left } else { left - 1 }, out);
    }
    cur[pos] = 0;
}
