use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmmclust"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) {
    fs::write(dir.join("cfg.json"), body).unwrap();
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

const IID2: &str = r#"{"model":{"nu":[0.3,0.7],"emissions":[
    {"type":"finite","pmf":[0.7,0.2,0.1]},{"type":"finite","pmf":[0.1,0.3,0.6]}]},
    "n":6,"trials":50,"seed":4}"#;

#[test]
fn simulate_then_estimate_from_file() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), r#"{"preset":"example1","n":3000,"seed":11}"#);
    let out = run(
        dir.path(),
        &["simulate", "--config", "cfg.json", "--out", "sim"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("sim/trajectory.csv")).unwrap();
    assert!(csv.starts_with("i,x,y\n1,"));
    assert_eq!(csv.lines().count(), 3001);
    assert!(dir.path().join("sim/config.json").exists());

    write_config(
        dir.path(),
        r#"{"data":"sim/trajectory.csv","states":2,"seed":1}"#,
    );
    let out = run(
        dir.path(),
        &["estimate", "--config", "cfg.json", "--out", "est"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let est = read_json(&dir.path().join("est/estimate.json"));
    let q = est["q_hat"].as_array().unwrap();
    assert_eq!(q.len(), 2);
    let dens = fs::read_to_string(dir.path().join("est/densities.csv")).unwrap();
    assert!(dens.starts_with("x,f1,f2\n"));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), r#"{"preset":"example2","n":200}"#);
    for out in ["a", "b"] {
        assert!(run(
            dir.path(),
            &["simulate", "--config", "cfg.json", "--seed", "9", "--out", out]
        )
        .status
        .success());
    }
    let a = fs::read(dir.path().join("a/trajectory.csv")).unwrap();
    let b = fs::read(dir.path().join("b/trajectory.csv")).unwrap();
    assert_eq!(a, b);
    let cfg = read_json(&dir.path().join("a/config.json"));
    assert_eq!(cfg["seed"], 9);
}

#[test]
fn cluster_reports_every_method() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        r#"{"preset":"example1","n":2000,"seed":2,"gaussian_second_param":"variance"}"#,
    );
    let out = run(
        dir.path(),
        &["cluster", "--config", "cfg.json", "--threads", "2"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let runs = read_json(&dir.path().join("out/cluster.json"));
    let runs = runs.as_array().unwrap();
    assert_eq!(runs.len(), 3);
    let oracle = &runs[0];
    assert_eq!(oracle["method"], "oracle-bayes");
    assert!(oracle["aligned_error"].as_f64().unwrap() < 0.05);
    let labels = oracle["labels"].as_array().unwrap();
    assert_eq!(labels.len(), 2000);
    assert!(labels.iter().all(|l| l == 1 || l == 2));
}

#[test]
fn exact_on_iid_two_states_finds_no_violation() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), IID2);
    let out = run(dir.path(), &["exact", "--config", "cfg.json"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = read_json(&dir.path().join("out/exact.json"));
    assert_eq!(r["coincidence"]["violations"], 0);
    let class = r["bayes_class_risk"].as_f64().unwrap();
    let clust = r["bayes_clust_risk"].as_f64().unwrap();
    assert!(clust <= class + 1e-12);
    assert!((r["mrss_risk"].as_f64().unwrap() - class).abs() < 1e-10);
}

#[test]
fn exact_reports_skipped_risks_beyond_limits() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        r#"{"model":{"nu":[0.5,0.5],"emissions":[
            {"type":"finite","pmf":[0.9,0.1]},{"type":"finite","pmf":[0.2,0.8]}]},
            "n":9,"trials":5,"limits":{"max_n":8,"max_label_paths":100000,"max_observation_paths":1000}}"#,
    );
    let out = run(dir.path(), &["exact", "--config", "cfg.json"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = read_json(&dir.path().join("out/exact.json"));
    assert!(r["bayes_clust_risk"]["skipped"].is_string());
}

#[test]
fn bounds_file_is_flat_with_formulas() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        r#"{"preset":"example1","n":1000,"replicates":2,"gaussian_second_param":"variance"}"#,
    );
    let out = run(dir.path(), &["bounds", "--config", "cfg.json"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let b = read_json(&dir.path().join("out/bounds.json"));
    let lambda = b["Lambda"].as_f64().unwrap();
    assert!((lambda - 0.0462).abs() < 1e-3);
    assert!(b["Lambda_formula"].is_string());
    assert!(b["sandwich_lo"].as_f64().unwrap() <= b["sandwich_hi"].as_f64().unwrap());
    assert_eq!(b["delta"].as_f64().unwrap(), 0.2);
    assert!(b["fastrate"]["holds"].as_bool().unwrap());
}

#[test]
fn reproduce_prop1_writes_ratio_table() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), r#"{"n":6,"etas":[0.1,0.01]}"#);
    let out = run(dir.path(), &["reproduce", "prop1", "--config", "cfg.json"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("out/prop1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "eta,eps,clust_risk,class_risk,ratio,class_reference,exact"
    );
    let ratios: Vec<f64> = lines
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(ratios.len(), 2);
    assert!(ratios[0] > ratios[1]);
}

#[test]
fn reproduce_table1_small() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), r#"{"n":2000,"replicates":2,"seed":5}"#);
    let out = run(dir.path(), &["reproduce", "table1", "--config", "cfg.json"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("out/table1.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "example,oracle_bayes,plugin,kmeans,lambda");
    assert!(lines[1].starts_with("example1,") && lines[2].starts_with("example2,"));
    let summary = read_json(&dir.path().join("out/summary.json"));
    assert_eq!(summary["gaussian_second_param"], "variance");
}

#[test]
fn invalid_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), r#"{"n":0,"gamma":0.7,"preset":"nope"}"#);
    let out = run(dir.path(), &["bounds", "--config", "cfg.json"]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    let msg = err["error"].as_str().unwrap();
    for needle in ["n must be", "gamma", "preset"] {
        assert!(msg.contains(needle), "{msg}");
    }
}

#[test]
fn missing_model_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["simulate"]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("model"));
}

#[test]
fn primary_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        r#"{"preset":"example1","n":3000,"seed":6,"gaussian_second_param":"variance"}"#,
    );
    for out in ["a", "b"] {
        for cmd in ["cluster", "estimate", "bounds"] {
            let o = run(dir.path(), &[cmd, "--config", "cfg.json", "--out", out]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
    }
    for file in [
        "cluster.json",
        "estimate.json",
        "densities.csv",
        "bounds.json",
        "config.json",
    ] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
}
