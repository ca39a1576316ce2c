use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_compresslearn");

fn run(args: &[&str]) -> String {
    let out = Command::new(BIN).args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn run_config(cfg: &Path, out: &Path, workers: &str) -> (String, String) {
    run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", workers]);
    (
        fs::read_to_string(out.join("rows.csv")).unwrap(),
        fs::read_to_string(out.join("summary.csv")).unwrap(),
    )
}

const CONFIGS: &[&str] = &[
    r#"{"experiment": "scheme_roundtrip", "scheme": "g1d",
        "distribution": {"type": "gaussian", "mean": [2.0], "cov": [[0.5]]},
        "grid": {"eps": [0.2, 0.3]}, "trials": 8, "seed": 11, "n_mc": 4000}"#,
    r#"{"experiment": "learn_curve",
        "distribution": {"type": "gaussian", "mean": [0, 0, 0], "cov": [[1, 0, 0], [0, 2, 0], [0, 0, 3]]},
        "grid": {"n": [512, 2048]}, "trials": 4, "seed": 5, "n_mc": 4000}"#,
    r#"{"experiment": "hull_probe", "d": 3, "grid": {"contamination": [0.0, 0.3]}, "trials": 3, "seed": 2}"#,
];

#[test]
fn run_is_byte_identical_across_repeats_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    for (i, text) in CONFIGS.iter().enumerate() {
        let cfg = dir.path().join(format!("cfg{i}.json"));
        fs::write(&cfg, text).unwrap();
        let a = run_config(&cfg, &dir.path().join(format!("a{i}")), "1");
        let b = run_config(&cfg, &dir.path().join(format!("b{i}")), "1");
        let c = run_config(&cfg, &dir.path().join(format!("c{i}")), "4");
        assert_eq!(a, b, "config {i}: repeat differs");
        assert_eq!(a, c, "config {i}: worker count changes output");
        let manifest = fs::read_to_string(dir.path().join(format!("a{i}/run-manifest.json"))).unwrap();
        let manifest_c = fs::read_to_string(dir.path().join(format!("c{i}/run-manifest.json"))).unwrap();
        assert_eq!(manifest, manifest_c);
    }
}

#[test]
fn bad_config_reports_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"experiment": "hull_probe", "grid": {"contamination": [0.1]}, "trials": 0, "seed": 1}"#).unwrap();
    let out = Command::new(BIN)
        .args(["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("trials"));
}

#[test]
fn distances_prints_one_record() {
    let p = r#"{"type": "gaussian", "mean": [0.0], "cov": [[1.0]]}"#;
    let q = r#"{"type": "gaussian", "mean": [1.0], "cov": [[1.0]]}"#;
    let v: serde_json::Value = serde_json::from_str(&run(&["distances", "--p", p, "--q", q, "--metric", "kl"])).unwrap();
    assert!((v["value"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let v: serde_json::Value = serde_json::from_str(&run(&["distances", "--p", p, "--q", q, "--metric", "tv"])).unwrap();
    // 2Φ(1/2) − 1
    assert!((v["value"].as_f64().unwrap() - 0.382_924_922_548_026).abs() < 1e-7);
}

#[test]
fn learn_and_lowerbound_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let target = r#"{"type": "gaussian", "mean": [1.0], "cov": [[4.0]]}"#;
    let out = dir.path().join("learn.json");
    run(&["learn", "--target", target, "--scheme", "g1d", "--eps", "0.3", "--delta", "0.2", "--budget", "500",
          "--seed", "3", "--oracle", "--out", out.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["budget_capped"], true);
    assert!(v["tv_to_target"].as_f64().unwrap() <= 0.3);

    let fam = dir.path().join("lb/family.json");
    run(&["lowerbound", "--d", "18", "--r", "9", "--eps", "0.25", "-M", "8", "--seed", "1", "--out", fam.to_str().unwrap()]);
    let kl = fs::read_to_string(dir.path().join("lb/family-kl.csv")).unwrap();
    assert_eq!(kl.lines().count(), 8);
    assert!(dir.path().join("lb/family-fano.json").exists());
}
