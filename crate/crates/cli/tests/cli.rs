use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn epifrost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epifrost")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const SCALAR: &str = r#"{
  "population": {"pi": [1.0], "n": 2000, "a": [1]},
  "kernel": {"kind": "constant", "mu": 2.0},
  "replicates": 400,
  "seed": 5,
  "checks": ["lln", "major_prob"]
}"#;

const MIXED: &str = r#"{
  "population": {"pi": [0.5, 0.5], "n": 1000, "a": [1, 1]},
  "kernel": {"kind": "mixed_bernoulli", "theta": [1.0, 2.0], "w": {"dist": "constant", "value": 1.0}},
  "replicates": 200,
  "seed": 11
}"#;

#[test]
fn solve_reports_attack_rate() {
    let dir = tempfile::tempdir().unwrap();
    // no initial infectives, so the limit is the ζ = 0 fixed point
    let cfg = write(dir.path(), "scalar.json", &SCALAR.replace("\"a\": [1]", "\"a\": [0]"));
    let out = epifrost(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["tau"][0].as_f64().unwrap() - 0.7968121300312243).abs() < 1e-10);
    assert!((v["R"].as_f64().unwrap() - 2.0).abs() < 1e-10);
}

#[test]
fn extinction_clt_and_graph_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "mixed.json", MIXED);
    let cfg = cfg.to_str().unwrap();

    let out = epifrost(&["extinction", "--config", cfg]);
    assert_eq!(out.status.code(), Some(0));
    let q = json(&out)["q"].as_array().unwrap().len();
    assert_eq!(q, 2);

    let out = epifrost(&["clt", "--config", cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["allocation"], "random_multinomial");

    let out = epifrost(&["graph", "--config", cfg]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.len() > 2);
}

#[test]
fn validate_passes_and_fails_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "scalar.json", SCALAR);
    let out = epifrost(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(json(&out)["passed"], true);

    // a threshold of 1 calls most small outbreaks major
    let failing = SCALAR.replace("\"seed\": 5,", "\"seed\": 5, \"threshold_override\": 1,");
    let cfg = write(dir.path(), "failing.json", &failing);
    let out = epifrost(&["validate", "--config", cfg.to_str().unwrap(), "--replicates", "3000"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["passed"], false);
}

#[test]
fn malformed_config_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", "{\n  \"population\": {\"pi\": [1.0], \"n\": 10},\n  \"kernel\": {\"kind\": \"constant\" \"mu\": 2}\n}");
    let out = epifrost(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    let cfg = write(dir.path(), "unknown.json", &SCALAR.replace("\"kind\": \"constant\"", "\"kind\": \"lattice\""));
    assert_eq!(epifrost(&["solve", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));

    assert_eq!(epifrost(&["solve", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));
}

#[test]
fn singular_linearisation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let critical = SCALAR.replace("\"mu\": 2.0", "\"mu\": 1.0").replace("\"a\": [1]", "\"a\": [0]");
    let cfg = write(dir.path(), "critical.json", &critical);
    let out = epifrost(&["clt", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_output_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for workers in [1, 4] {
        let text = MIXED.replace("\"seed\": 11", &format!("\"seed\": 11, \"workers\": {workers}"));
        let cfg = write(dir.path(), &format!("w{workers}.json"), &text);
        for ext in ["csv", "jsonl"] {
            let out_path = dir.path().join(format!("w{workers}.{ext}"));
            let out = epifrost(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            files.push(std::fs::read(&out_path).unwrap());
        }
    }
    assert_eq!(files[0], files[2]);
    assert_eq!(files[1], files[3]);
    let csv = String::from_utf8(files[0].clone()).unwrap();
    assert!(csv.starts_with("# epifrost records v1"));
    assert_eq!(csv.lines().count(), 202);
    assert_eq!(String::from_utf8(files[1].clone()).unwrap().lines().count(), 200);
}

#[test]
fn seed_flag_changes_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "scalar.json", SCALAR);
    let run = |seed: &str, name: &str| {
        let p = dir.path().join(name);
        let out = epifrost(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(p).unwrap()
    };
    assert_eq!(run("9", "a.csv"), run("9", "b.csv"));
    assert_ne!(run("9", "c.csv"), run("10", "d.csv"));
}
