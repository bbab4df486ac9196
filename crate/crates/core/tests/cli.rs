use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn eshare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eshare")).args(args).env_remove("ESHARE_OUT_DIR").output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn gne_report_on_congested_two_bus() {
    let path = fixture("two_bus_f5.json");
    let out = eshare(&["gne", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["command"], "gne");
    assert_eq!(report["scenario_digest"].as_str().unwrap().len(), 64);
    let p: Vec<f64> = serde_json::from_value(report["results"]["p"].clone()).unwrap();
    assert!((p[0] - 105.0).abs() <= 1e-6 && (p[1] - 195.0).abs() <= 1e-6);
    for (_, r) in report["residuals"].as_object().unwrap() {
        assert!(r.as_f64().unwrap() <= 1e-8);
    }
}

#[test]
fn selfsuff_as_csv() {
    let path = fixture("two_bus_f5.json");
    let out = eshare(&["--format", "csv", "selfsuff", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rows.headers().unwrap(), vec!["i", "cost"]);
    let costs: Vec<f64> = rows.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert!((costs[0] - 72.0).abs() <= 1e-6 && (costs[1] - 384.0).abs() <= 1e-6);
}

#[test]
fn malformed_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let mut file: Value = serde_json::from_str(&std::fs::read_to_string(fixture("two_bus_f5.json")).unwrap()).unwrap();
    file["network"]["bus_count"] = Value::from(3);
    std::fs::write(&bad, file.to_string()).unwrap();
    let out = eshare(&["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    assert_eq!(eshare(&["gne"]).status.code(), Some(1));
}

#[test]
fn bidding_cut_short_exits_with_no_convergence() {
    let path = fixture("two_bus_f5.json");
    let out = eshare(&["bid", path.to_str().unwrap(), "--max-iter", "2"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["results"]["termination"], "max_iter_exceeded");
    assert_eq!(eshare(&["bid", path.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn bidding_trace_is_written_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let path = fixture("two_bus_f5.json");
    let out = eshare(&["bid", path.to_str().unwrap(), "--trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let mut rows = csv::Reader::from_path(&trace).unwrap();
    assert_eq!(rows.headers().unwrap(), vec!["iter", "i", "lambda", "b", "p", "delta_b_norm", "dist_to_eqm"]);
    assert!(rows.records().count() >= 2);
}

#[test]
fn report_goes_to_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("social.json");
    let path = fixture("two_bus_f10.json");
    let out = eshare(&["--out", target.to_str().unwrap(), "social", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert_eq!(report["command"], "social");
}

#[test]
fn generator_is_deterministic() {
    let first = eshare(&["gen", "--seed", "11", "--size", "6"]);
    let second = eshare(&["gen", "--seed", "11", "--size", "6"]);
    let other = eshare(&["gen", "--seed", "12", "--size", "6"]);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    assert_ne!(first.stdout, other.stdout);
    assert_eq!(json(&first)["network"]["bus_count"], 6);
}

#[test]
fn batch_writes_one_report_per_scenario() {
    let input = tempfile::tempdir().unwrap();
    let reports = tempfile::tempdir().unwrap();
    for seed in ["1", "2", "3"] {
        let out = eshare(&["gen", "--seed", seed, "--size", "4"]);
        std::fs::write(input.path().join(format!("s{seed}.json")), out.stdout).unwrap();
    }
    let out = Command::new(env!("CARGO_BIN_EXE_eshare"))
        .args(["batch", "--dir", input.path().to_str().unwrap()])
        .env("ESHARE_OUT_DIR", reports.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for seed in ["1", "2", "3"] {
        let text = std::fs::read_to_string(reports.path().join(format!("s{seed}.gne.json"))).unwrap();
        let report: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(report["command"], "gne");
    }
}

#[test]
fn brlab_verify_accepts_the_example_equilibrium() {
    let path = fixture("three_bus_f030.json");
    let out = eshare(&["brlab", path.to_str().unwrap(), "--verify", "--bids", "1.6,1.6,0.8"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(&out)["results"]["is_gne"].as_bool().unwrap());
    let tight = fixture("three_bus_f027.json");
    let out = eshare(&["brlab", tight.to_str().unwrap(), "--verify", "--bids", "1.6,1.6,0.8"]);
    assert!(!json(&out)["results"]["is_gne"].as_bool().unwrap());
}
