//! Invariant checks across the library, each with a name and a tolerance.

use rand::Rng;
use serde::Serialize;
use sqlab_core::analysis::{
    chi2_cross_gmm_known, chi2_cross_reg, cj_counts_by_enumeration, cj_table, growth_check, hermite_coeffs,
    hermite_cross_moment, tolerance_gap_check, CoeffMethod, GAP_DENOM_PROVABLE, GAP_DENOM_STATED,
};
use sqlab_core::detectors::net::{covering_net, net_size_bound};
use sqlab_core::detectors::reg::a2;
use sqlab_core::exec::stream_rng;
use sqlab_core::models::{Covariance, SignSupportVector, DEFAULT_ENUM_CAP};
use sqlab_core::numerics::phi;
use sqlab_core::numerics::quadrature::integrate;
use sqlab_core::sq::{tolerance, OracleConfig};

use crate::CliError;

pub type A2Fn = fn(f64) -> sqlab_core::Result<f64>;

/// Knobs for the suite. `a2` can be swapped for a faulty version to confirm that
/// the quadrature comparison catches it.
#[derive(Clone, Copy)]
pub struct VerifyOptions {
    pub a2: A2Fn,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { a2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub tolerance: f64,
    /// Measured discrepancy, or 0/1 for exact checks.
    pub measured: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn status(&self) -> Result<(), CliError> {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(CliError::Negative(format!("failed checks: {}", failed.join(", "))))
        }
    }
}

fn within(name: &'static str, tolerance: f64, measured: f64, detail: String) -> CheckResult {
    CheckResult { name, tolerance, measured, passed: measured <= tolerance, detail }
}

fn exact(name: &'static str, ok: bool, detail: String) -> CheckResult {
    CheckResult { name, tolerance: 0.0, measured: if ok { 0.0 } else { 1.0 }, passed: ok, detail }
}

type Check = fn(&VerifyOptions) -> sqlab_core::Result<CheckResult>;

fn a2_at_zero(o: &VerifyOptions) -> sqlab_core::Result<CheckResult> {
    let v = (o.a2)(0.0)?;
    Ok(within("a2-at-zero", 4.0 * f64::EPSILON, (v - 2.0).abs(), format!("a2(0) = {v}")))
}

fn a2_vs_quadrature(o: &VerifyOptions) -> sqlab_core::Result<CheckResult> {
    let mut worst: f64 = 0.0;
    let mut at = 0.0;
    for k in 0..=40 {
        let t = 0.25 * k as f64;
        let q = 2.0 * integrate(|w| w * w * (w * w - 1.0) * phi(w), t, t.max(1.0) + 40.0, 1e-13)?;
        let err = ((o.a2)(t)? - q).abs();
        if err > worst {
            worst = err;
            at = t;
        }
    }
    Ok(within("a2-closed-form-vs-quadrature", 1e-8, worst, format!("max error on t in [0, 10] at t = {at}")))
}

fn a2_bracket(o: &VerifyOptions) -> sqlab_core::Result<CheckResult> {
    let (mut lo, mut hi) = (1.0, 10.0);
    if !((o.a2)(lo)? > 0.5 && (o.a2)(hi)? <= 0.5) {
        return Ok(exact("a2-half-level-bracket", false, "no sign change on [1, 10]".into()));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if (o.a2)(mid)? <= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(exact("a2-half-level-bracket", hi > 2.7 && hi < 2.8, format!("inf{{t : a2(t) <= 1/2}} = {hi:.10}")))
}

fn hermite_isserlis(_: &VerifyOptions) -> sqlab_core::Result<CheckResult> {
    let gh = CoeffMethod::GaussHermite { order: 40 };
    let a = hermite_coeffs(|w| w * w, 6, &gh)?;
    let b = hermite_coeffs(|z| z * z - 1.0, 6, &gh)?;
    let mut worst: f64 = 0.0;
    for k in 0..=20 {
        let zeta = -1.0 + 0.1 * k as f64;
        worst = worst.max((hermite_cross_moment(&a, &b, zeta)? - 2.0 * zeta * zeta).abs());
    }
    Ok(within("hermite-series-isserlis", 1e-8, worst, "E[W^2 (Z^2 - 1)] = 2 zeta^2 on zeta in [-1, 1]".into()))
}

fn hermite_truncated(o: &VerifyOptions) -> sqlab_core::Result<CheckResult> {
    let t = 1.3;
    let method = CoeffMethod::Breakpoints { points: vec![-t, t], half_width: 40.0, tol: 1e-12 };
    let c = hermite_coeffs(move |w| if w.abs() > t { w * w } else { 0.0 }, 6, &method)?;
    let err = (2f64.sqrt() * c[2] - (o.a2)(t)?).abs();
    Ok(within("hermite-truncated-square", 1e-8, err, format!("sqrt(2) c_2 of w^2 1{{|w| > {t}}} against a2({t})")))
}

fn cj_enumeration(_: &VerifyOptions) -> sqlab_core::Result<CheckResult> {
    for d in 1..=14 {
        for s in 1..=3.min(d) {
            let table = cj_table(d, s)?;
            if table.sizes != cj_counts_by_enumeration(d, s, DEFAULT_ENUM_CAP)? {
                return Ok(exact("cj-table-vs-enumeration", false, format!("mismatch at d = {d}, s = {s}")));
            }
        }
    }
    Ok(exact("cj-table-vs-enumeration", true, "d <= 14, s <= 3".into()))
}

fn cj_pinned(_: &VerifyOptions) -> sqlab_core::Result<CheckResult> {
    let a = cj_table(4, 2)?.sizes;
    let b = cj_table(12, 2)?.sizes;
    Ok(exact("cj-pinned-tables", a == [2, 16, 6] && b == [2, 80, 182], format!("{a:?}, {b:?}")))
}

fn growth(_: &VerifyOptions) -> sqlab_core::Result<CheckResult> {
    let big = growth_check(&cj_table(12, 2)?).holds;
    let small = growth_check(&cj_table(4, 2)?).holds;
    Ok(exact("cj-growth", big && !small, format!("d = 12: {big}; d = 4 (known counterexample): {small}")))
}

fn chi2_pinned(_: &VerifyOptions) -> sqlab_core::Result<CheckResult> {
    let v = SignSupportVector::from_entries(vec![1, -1, 0])?;
    let reg = (chi2_cross_reg(&v, &v, 0.5, 1.0, None)? - 1.125).abs();
    let w = SignSupportVector::from_entries(vec![1, 1, 1, 1, 0])?;
    let gmm = (chi2_cross_gmm_known(&w, &w, 1.0, 0.5)? - 1f64.cosh()).abs();
    Ok(within("chi2-pinned-values", 1e-12, reg.max(gmm), "regression 1.125 and mixture cosh(1)".into()))
}

fn tolerance_example(_: &VerifyOptions) -> sqlab_core::Result<CheckResult> {
    let cfg = OracleConfig::new(1.0 / std::f64::consts::E, 100, 1, 0.0)?;
    let t = tolerance(&cfg, 1.0, 1.0)?;
    Ok(within("tolerance-example", 1e-15, (t - 0.01).abs(), format!("tau = {t}")))
}

fn gap_lemma(o: &VerifyOptions) -> sqlab_core::Result<CheckResult> {
    let stated = tolerance_gap_check(1, 0.3, 10, 1.0, -0.849, -0.97, GAP_DENOM_STATED)?;
    let mut rng = stream_rng(o.seed, 0x6a9);
    let mut failures = 0;
    for _ in 0..20_000 {
        let n = [10usize, 100, 1000, 100_000][rng.random_range(0..4)];
        let t = [1usize, 10, 1000][rng.random_range(0..3)];
        let xi = [0.01, 0.05, 0.3][rng.random_range(0..3)];
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let ev = sign * (1.0 - 10f64.powf(-9.0 * rng.random::<f64>()));
        let e0 = rng.random_range(-1.0..1.0);
        if tolerance_gap_check(t, xi, n, 1.0, e0, ev, GAP_DENOM_PROVABLE)? == Some(false) {
            failures += 1;
        }
    }
    let ok = stated == Some(false) && failures == 0;
    Ok(exact("tolerance-gap-lemma", ok, format!("3n counterexample reproduced: {}; 5n failures: {failures}", stated == Some(false))))
}

fn net_cover(o: &VerifyOptions) -> sqlab_core::Result<CheckResult> {
    let net = covering_net(0.5, &Covariance::identity(6), 2, DEFAULT_ENUM_CAP)?;
    let per_support = net.blocks[0].elements.len() as f64;
    let cover = net.probe_coverage(20_000, o.seed)?;
    Ok(exact(
        "covering-net",
        per_support <= net_size_bound(0.5, 2) && cover >= 0.999,
        format!("{per_support} elements per support, probe coverage {cover}"),
    ))
}

const CHECKS: [(&str, Check); 12] = [
    ("a2-at-zero", a2_at_zero),
    ("a2-closed-form-vs-quadrature", a2_vs_quadrature),
    ("a2-half-level-bracket", a2_bracket),
    ("hermite-series-isserlis", hermite_isserlis),
    ("hermite-truncated-square", hermite_truncated),
    ("cj-table-vs-enumeration", cj_enumeration),
    ("cj-pinned-tables", cj_pinned),
    ("cj-growth", growth),
    ("chi2-pinned-values", chi2_pinned),
    ("tolerance-example", tolerance_example),
    ("tolerance-gap-lemma", gap_lemma),
    ("covering-net", net_cover),
];

/// Names of all checks, in run order.
pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.0).collect()
}

/// Runs the checks whose names are listed (all of them when `only` is `None`).
/// A check that errors is reported as failed.
pub fn run_checks(options: &VerifyOptions, only: Option<&[&str]>) -> VerifyReport {
    let checks = CHECKS
        .iter()
        .filter(|(name, _)| only.is_none_or(|o| o.contains(name)))
        .map(|&(name, check)| {
            check(options).unwrap_or_else(|e| CheckResult {
                name,
                tolerance: 0.0,
                measured: f64::NAN,
                passed: false,
                detail: format!("failed to run: {e}"),
            })
        })
        .collect();
    VerifyReport { checks }
}

pub fn run_verify(options: &VerifyOptions) -> VerifyReport {
    run_checks(options, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let r = run_verify(&VerifyOptions::default());
        for c in &r.checks {
            assert!(c.passed, "{c:?}");
        }
        assert_eq!(r.checks.len(), CHECKS.len());
        for (c, name) in r.checks.iter().zip(check_names()) {
            assert_eq!(c.name, name);
        }
        assert_eq!(run_checks(&VerifyOptions::default(), Some(&["cj-growth"])).checks.len(), 1);
    }

    #[test]
    fn corrupted_a2_is_caught() {
        fn bad(t: f64) -> sqlab_core::Result<f64> {
            Ok(a2(t)? + 1e-6 * t)
        }
        let r = run_verify(&VerifyOptions { a2: bad, seed: 0 });
        let failed: Vec<_> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        assert!(failed.contains(&"a2-closed-form-vs-quadrature"), "{failed:?}");
        assert_eq!(r.status().unwrap_err().exit_code(), 1);
    }
}
