use std::path::PathBuf;
use std::process::{Command, Output};

fn sqlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqlab")).args(args).output().expect("spawn sqlab")
}

fn config(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sqlab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const SWEEP: &str = r#"{"model": "gmm", "d": 6, "s": 2, "n": 200, "gamma_grid": [0.5, 4.0],
    "trials": 20, "calibration_trials": 100, "seed": 5, "timing": false}"#;

#[test]
fn sweep_writes_fixed_header_and_is_reproducible() {
    let cfg = config("sweep.json", SWEEP);
    let a = sqlab(&["sweep", "--config", cfg.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "model,detector,oracle,d,s,n,nu,sigma,gamma,xi,threshold_mode,trials,seed,type1,type2,risk,wall_ms"
    );
    assert_eq!(lines.count(), 2);
    let b = sqlab(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn seed_flag_overrides_config() {
    let cfg = config("seeded.json", SWEEP);
    let o = sqlab(&["sweep", "--config", cfg.to_str().unwrap(), "--seed", "77"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(12) == Some("77")), "{text}");
}

#[test]
fn usage_errors_exit_2() {
    let unknown = config("unknown.json", r#"{"model": "gmm", "d": 4, "s": 1, "n": 10, "bogus": 1}"#);
    let o = sqlab(&["sweep", "--config", unknown.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    assert_eq!(code(&sqlab(&["sweep"])), 2);
    assert_eq!(code(&sqlab(&["frobnicate"])), 2);
    assert_eq!(code(&sqlab(&["verify", "--threads", "x"])), 2);
    let missing = sqlab(&["sweep", "--config", "/nonexistent/sqlab.json"]);
    assert_eq!(code(&missing), 2);
    assert_eq!(code(&sqlab(&["--help"])), 0);
}

#[test]
fn coverage_exit_code_follows_witness() {
    // weak signal: some alternative answers like the null, so a witness exists
    let weak = config(
        "weak.json",
        r#"{"model": "gmm", "d": 6, "s": 2, "n": 500, "gamma_grid": [0.5], "detector": "diagonal"}"#,
    );
    let o = sqlab(&["coverage", "--config", weak.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cert: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cert["transcripts_identical"], true);
    assert!(cert["witness"].is_object());

    let strong = config(
        "strong.json",
        r#"{"model": "gmm", "d": 6, "s": 2, "n": 500, "gamma_grid": [500.0], "detector": "diagonal"}"#,
    );
    let o = sqlab(&["coverage", "--config", strong.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
    let cert: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cert["union_size"], cert["gs_size"]);
}

#[test]
fn verify_passes_without_config() {
    let o = sqlab(&["verify"]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["checks"].as_array().is_some_and(|c| !c.is_empty()));
}

#[test]
fn demo_routes_trace_and_summary() {
    let cfg = config(
        "demo.json",
        r#"{"model": "reg", "d": 10, "s": 2, "n": 400, "detector": "coordinate",
            "demo": {"iterations": 50, "refit_iterations": 30}}"#,
    );
    let o = sqlab(&["demo-sgd", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("iteration,phase,objective,nonzeros\n"));
    let summary: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(summary["d"], 10);

    let trace = cfg.with_extension("csv");
    let o = sqlab(&["demo-sgd", "--config", cfg.to_str().unwrap(), "--out", trace.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(summary["error"].is_number());
    assert!(std::fs::read_to_string(&trace).unwrap().starts_with("iteration,"));

    let diverge = config(
        "diverge.json",
        r#"{"model": "reg", "d": 10, "s": 2, "n": 400, "detector": "coordinate", "demo": {"step": 5.0}}"#,
    );
    assert_eq!(code(&sqlab(&["demo-sgd", "--config", diverge.to_str().unwrap()])), 1);
}
