use std::path::Path;
use std::process::Command;

use fspde::harness::{aggregate, ExperimentResult};
use fspde::Error;

const BIN: &str = env!("CARGO_BIN_EXE_fspde");

const GALERKIN: &str = r#"
seed = 12
samples = 100
[spectrum]
c = 1.0
gamma = 2.0
modes = 8
trace_exponent = 0.4
[coefficients.noise]
kind = "multiplicative"
q = 1.0
decay = 1.0
kappa = 0.3
[time]
r = 0.25
horizon = 0.5
dt = 0.0625
[galerkin]
modes = [2, 4]
reference = 8
"#;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn missing_or_invalid_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["galerkin"]).0, 2);
    let bad = write(dir.path(), "bad.toml", &GALERKIN.replace("dt = 0.0625", "dt = 0.1"));
    let (code, log) = run(&["galerkin", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(log.contains("event=config_error") && log.contains("time.dt"), "{log}");
    let (code, _) = run(&["galerkin", "--config", write(dir.path(), "ok.toml", GALERKIN).to_str().unwrap(), "--samples", "10"]);
    assert_eq!(code, 2);
}

#[test]
fn reruns_write_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.toml", GALERKIN);
    let outs: Vec<_> = ["a", "b"].iter().map(|d| dir.path().join(d)).collect();
    for o in &outs {
        let (code, log) = run(&["galerkin", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
        assert_eq!(code, 0, "{log}");
        assert!(log.lines().any(|l| l.contains("criterion=galerkin passed=true")), "{log}");
    }
    for f in ["galerkin.json", "galerkin_errors.csv"] {
        let a = std::fs::read(outs[0].join(f)).unwrap();
        assert_eq!(a, std::fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn failing_verdict_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // more modes first: the errors grow along the sweep
    let cfg = write(dir.path(), "g.toml", &GALERKIN.replace("modes = [2, 4]", "modes = [4, 2]"));
    let (code, log) = run(&["galerkin", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code, 1, "{log}");
}

#[test]
fn seed_override_changes_the_hash_and_aggregation_rejects_mixtures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.toml", GALERKIN);
    let mut results = Vec::new();
    for (seed, out) in [("12", "a"), ("13", "b")] {
        let o = dir.path().join(out);
        assert_eq!(run(&["galerkin", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", o.to_str().unwrap()]).0, 0);
        results.push(ExperimentResult::load(&o.join("galerkin.json")).unwrap());
    }
    assert_ne!(results[0].config_hash, results[1].config_hash);
    let h = results[0].config_hash.clone();
    assert!(aggregate(&h, vec![results[0].clone()]).is_ok());
    assert!(matches!(aggregate(&h, results), Err(Error::HashMismatch { .. })));
}

#[test]
fn simulate_writes_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", &GALERKIN.replace("[galerkin]\nmodes = [2, 4]\nreference = 8\n", ""));
    let o = dir.path().join("o");
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]).0, 0);
    let csv = std::fs::read_to_string(o.join("simulate_trajectory.csv")).unwrap();
    // header plus rows for t = −0.25 … 0.5
    assert_eq!(csv.lines().count(), 1 + 13);
    assert!(csv.starts_with("t,mode_1,"));
}
