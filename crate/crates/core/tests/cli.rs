//! The `qsd` binary end to end: outputs, exit codes and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

use qsd::measure::read_csv;
use serde_json::Value;

fn qsd(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsd"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("qsd runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const SMALL_WF: [&str; 12] = [
    "simulate",
    "--model",
    "wright-fisher",
    "--n-particles",
    "50",
    "--dt",
    "1e-3",
    "--epochs",
    "20",
    "--bins",
    "20",
    "--workers=1",
];

#[test]
fn spectral_reports_lambda_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsd(&["spectral", "--model", "brownian", "--grid-size", "2000", "--out", "s"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lambda = stdout_json(&out)["lambda"].as_f64().unwrap();
    assert!((lambda - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-5, "{lambda}");
    for f in ["spectral_x.csv", "spectral_z.csv", "spectral_grid.csv", "spectral_x.json"] {
        assert!(dir.path().join("s").join(f).exists(), "{f}");
    }
    let meta: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s/spectral_x.json")).unwrap()).unwrap();
    assert_eq!(meta["model"], "brownian");
    assert!((meta["lambda"].as_f64().unwrap() - lambda).abs() < 1e-15);
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, out: &str| {
        let mut args = SMALL_WF.to_vec();
        args.extend(["--seed", seed, "--out", out]);
        let o = qsd(&args, dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.path().join(out).join("density_z.csv")).unwrap()
    };
    let a = run("5", "a");
    let b = run("5", "b");
    let c = run("6", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let h = read_csv(dir.path().join("a/density_x.csv")).unwrap();
    assert!((h.total_mass() - 1.0).abs() < 1e-12);
    assert_eq!(h.len(), 20);
}

#[test]
fn compare_prints_distances_and_sets_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SMALL_WF.to_vec();
    args.extend(["--out", "a"]);
    assert!(qsd(&args, dir.path()).status.success());
    let same = qsd(&["compare", "a/density_x.csv", "a/density_x.csv"], dir.path());
    assert!(same.status.success());
    let v = stdout_json(&same);
    assert_eq!(v["tv"].as_f64(), Some(0.0));
    assert_eq!(v["pass"], true);

    let spectral = qsd(
        &["spectral", "--model", "wright-fisher", "--bins", "20", "--grid-size", "2000", "--out", "a"],
        dir.path(),
    );
    assert!(spectral.status.success());
    let far = qsd(&["compare", "a/density_x.csv", "a/spectral_x.csv", "--tol", "0"], dir.path());
    assert!(!far.status.success());
    let v = stdout_json(&far);
    assert!(v["tv"].as_f64().unwrap() > 0.0);
    assert_eq!(v["pass"], false);
}

#[test]
fn invalid_input_exits_with_code_2_and_names_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let one = qsd(&["simulate", "--n-particles", "1"], dir.path());
    assert_eq!(one.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&one.stderr).contains("N must be ≥ 2"));

    let unknown = qsd(&["spectral", "--model", "ornstein"], dir.path());
    assert_eq!(unknown.status.code(), Some(2));

    std::fs::write(dir.path().join("bad.json"), r#"{"particles": 10}"#).unwrap();
    let bad = qsd(&["simulate", "--config", "bad.json"], dir.path());
    assert_eq!(bad.status.code(), Some(2));

    let missing = qsd(&["compare", "nope.csv", "nope.csv"], dir.path());
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"model": "brownian", "n_particles": 40, "dt": 0.001, "epochs": 5, "bins": 10, "seed": 3}"#,
    )
    .unwrap();
    let o = qsd(&["simulate", "--config", "run.json", "--bins", "16", "--out", "o"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/density_x.json")).unwrap()).unwrap();
    assert_eq!(meta["bins"], 16);
    assert_eq!(meta["n_particles"], 40);
    assert_eq!(meta["seed"], 3);
}

#[test]
fn check_hypotheses_and_eps_sweep_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let h = qsd(&["check-hypotheses", "--model", "wright-fisher"], dir.path());
    assert!(h.status.success());
    let v = stdout_json(&h);
    let verdicts: Vec<&str> = v["entries"].as_array().unwrap().iter().map(|e| e["verdict"].as_str().unwrap()).collect();
    assert_eq!(verdicts, ["pass", "pass", "pass"]);

    let s = qsd(
        &[
            "eps-sweep",
            "--model",
            "logistic-feller",
            "--param",
            "r=1",
            "--param",
            "c=1",
            "--epsilons",
            "0.02,0.01",
            "--grid-size",
            "1000",
            "--out",
            "sw",
        ],
        dir.path(),
    );
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    let table = std::fs::read_to_string(dir.path().join("sw/eps_sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3, "{table}");
    assert!(table.starts_with("epsilon,lambda,residual,grid_size,tv_to_next"));
}
