use super::chi2::CrossMomentKind;
use super::combinatorics::CjTable;
use crate::error::{domain, Result};
use crate::models::SignSupportVector;
use crate::sq::{tolerance, OracleConfig};

/// `max(0, 1 − √χ² / 2)`.
pub fn lecam_risk_lower_bound(chi2: f64) -> Result<f64> {
    if !(chi2 >= 0.0) {
        return Err(domain(format!("chi2 must be >= 0, got {chi2}")));
    }
    Ok((1.0 - 0.5 * chi2.sqrt()).max(0.0))
}

/// χ² divergence of the uniform mixture over `members` from the null:
/// `|C|⁻² Σ Σ cross(v, v′) − 1`.
pub fn mixture_chi2<F>(members: &[SignSupportVector], cross: F) -> Result<f64>
where
    F: Fn(&SignSupportVector, &SignSupportVector) -> Result<f64>,
{
    if members.is_empty() {
        return Err(domain("mixture needs at least one member"));
    }
    let mut total = 0.0;
    for a in members {
        for b in members {
            total += cross(a, b)?;
        }
    }
    Ok(total / (members.len() as f64).powi(2) - 1.0)
}

/// The same over all of G(s), grouping pairs by overlap: the cross moments
/// depend only on `|⟨v, v′⟩|`.
pub fn mixture_chi2_gs(table: &CjTable, kind: CrossMomentKind) -> Result<f64> {
    let total = table.total() as f64;
    let mut acc = 0.0;
    for (j, &size) in table.sizes.iter().enumerate() {
        if size > 0 {
            acc += size as f64 * kind.at_overlap((table.s - j) as i64)?;
        }
    }
    Ok(acc / total - 1.0)
}

/// `2 log(T/ξ) / (3n)`.
pub fn lemma54_bound(t: usize, xi: f64, n: usize) -> Result<f64> {
    if t < 1 || n < 1 || !(xi > 0.0 && xi < 1.0) {
        return Err(domain("need T >= 1, n >= 1, xi in (0,1)"));
    }
    Ok(2.0 * (t as f64 / xi).ln() / (3.0 * n as f64))
}

pub const GAP_DENOM_STATED: f64 = 3.0;
pub const GAP_DENOM_PROVABLE: f64 = 5.0;

/// `sqrt(2 log(T/ξ)(M² − E0²) / (c n))`.
pub fn tolerance_gap_bound(t: usize, xi: f64, n: usize, m: f64, e0: f64, c: f64) -> Result<f64> {
    if t < 1 || n < 1 || !(xi > 0.0 && xi < 1.0) || !(m > 0.0) || e0.abs() > m || !(c > 0.0) {
        return Err(domain("need T >= 1, n >= 1, xi in (0,1), M > 0, |E0| <= M, c > 0"));
    }
    Ok((2.0 * (t as f64 / xi).ln() * (m * m - e0 * e0) / (c * n as f64)).sqrt())
}

/// `None` when `|E0 − Ev| < τ(M, Ev)` with capacity `log T`; otherwise whether the
/// gap reaches [`tolerance_gap_bound`] with denominator `c n`.
pub fn tolerance_gap_check(t: usize, xi: f64, n: usize, m: f64, e0: f64, ev: f64, c: f64) -> Result<Option<bool>> {
    let cfg = OracleConfig::new(xi, n, t, (t as f64).ln())?;
    let gap = (e0 - ev).abs();
    if gap < tolerance(&cfg, m, ev)? {
        return Ok(None);
    }
    Ok(Some(gap >= tolerance_gap_bound(t, xi, n, m, e0, c)?))
}
