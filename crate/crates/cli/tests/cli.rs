use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn qfock(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfock"))
        .args(args)
        .env_remove("QFOCK_TOL")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap()
}

const CONST_04: &str = r#"{"cells": [{"lo": [0], "hi": [1], "re": 0.4}]}"#;
const CONST_05: &str = r#"{"cells": [{"lo": [0], "hi": [1], "re": 0.5}]}"#;
const AVERAGE: &str = r#"{"op": "average", "window": {"lo": [0], "hi": [1]}}"#;
const SWAP: &str = r#"{"op": "compose", "items": [
    {"op": "gauge", "alpha": {"cells": [{"lo": [0], "hi": [2], "re": 0.7}]}},
    {"op": "rearrange", "pairs": [
        {"source": {"lo": [0], "hi": [1]}, "target": {"lo": [1], "hi": [2]}},
        {"source": {"lo": [1], "hi": [2]}, "target": {"lo": [0], "hi": [1]}}]}]}"#;

#[test]
fn kernel_report() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.json", CONST_04);
    let f = f.to_str().unwrap();
    let report = stdout_json(&qfock(&["kernel", "--f", f, "--g", f, "--c", "1"]));
    assert_eq!(report["command"], "kernel");
    assert_eq!(report["inputs_digest"].as_str().unwrap().len(), 64);
    assert!(report.get("timings_ms").is_none());
    let value = report["outputs"]["value"]["re"].as_f64().unwrap();
    assert!((value - 5.0 / 3.0).abs() < 1e-14);
}

#[test]
fn domain_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "f.json", CONST_04);
    let bad = write(dir.path(), "bad.json", CONST_05);
    let out = qfock(&[
        "kernel",
        "--f",
        f.to_str().unwrap(),
        "--g",
        bad.to_str().unwrap(),
        "--c",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "domain");
    assert!(out.stdout.is_empty());

    let out = qfock(&["counterexample", "--lambda", "0.5", "--c", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_and_parse_errors_exit_one() {
    let out = qfock(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let broken = write(
        dir.path(),
        "broken.json",
        r#"{"cells": [{"lo": [1], "hi": [0], "re": 0.1}]}"#,
    );
    let p = broken.to_str().unwrap();
    let out = qfock(&["kernel", "--f", p, "--g", p, "--c", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "parse");

    let out = qfock(&["witness-search", "--op", p, "--c", "1"]);
    assert_eq!(out.status.code(), Some(1), "seed is mandatory");
}

#[test]
fn counterexample_report() {
    let report = stdout_json(&qfock(&["counterexample", "--lambda", "0.4", "--c", "1"]));
    let out = &report["outputs"];
    assert!((out["det_A_minus_B"].as_f64().unwrap() + 6.133e-3).abs() < 1e-6);
    assert_eq!(out["psd"], false);
    assert_eq!(out["witness_vector"].as_array().unwrap().len(), 2);
}

#[test]
fn nmoment_methods_agree() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "f.json",
        r#"{"cells": [{"lo": [0], "hi": [0.3], "re": 0.2, "im": 0.1}, {"lo": [0.5], "hi": [1], "re": -0.3}]}"#,
    );
    let g = write(dir.path(), "g.json", CONST_04);
    let report = stdout_json(&qfock(&[
        "nmoment",
        "--f",
        f.to_str().unwrap(),
        "--g",
        g.to_str().unwrap(),
        "--c",
        "1",
        "--n",
        "8",
    ]));
    assert!(report["outputs"]["rel_diff"].as_f64().unwrap() < 1e-9);
}

#[test]
fn csv_exports() {
    let dir = tempfile::tempdir().unwrap();
    let fs = write(
        dir.path(),
        "fs.json",
        &format!("[{CONST_04}, {{\"cells\": []}}]"),
    );
    let out = qfock(&[
        "gram",
        "--functions",
        fs.to_str().unwrap(),
        "--c",
        "1",
        "--format",
        "csv",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("i,j,re,im\n"));

    let f = write(dir.path(), "f.json", CONST_04);
    let p = f.to_str().unwrap();
    let out = qfock(&[
        "convergence",
        "--f",
        p,
        "--g",
        p,
        "--c",
        "1",
        "--n-max",
        "10",
        "--format",
        "csv",
    ]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 12);
}

#[test]
fn seeded_commands_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let avg = write(dir.path(), "avg.json", AVERAGE);
    let args = [
        "witness-search",
        "--op",
        avg.to_str().unwrap(),
        "--c",
        "1",
        "--trials",
        "50",
        "--seed",
        "4",
    ];
    let first = qfock(&args);
    assert_eq!(first.stdout, qfock(&args).stdout);
    let report = stdout_json(&first);
    assert_eq!(report["outputs"]["found"], true);
    assert_eq!(report["seed"], 4);

    let swap = write(dir.path(), "swap.json", SWAP);
    let args = ["classify", "--op", swap.to_str().unwrap(), "--seed", "9"];
    let first = qfock(&args);
    assert_eq!(first.stdout, qfock(&args).stdout);
    let out = &stdout_json(&first)["outputs"];
    assert_eq!(out["unitary"], true);
    assert_eq!(out["contraction_sufficient"], true);
}

#[test]
fn decompose_reports_witness_or_factors() {
    let dir = tempfile::tempdir().unwrap();
    let swap = write(dir.path(), "swap.json", SWAP);
    let out = &stdout_json(&qfock(&["decompose", "--op", swap.to_str().unwrap()]))["outputs"];
    assert_eq!(out["isometry"], true);
    assert!(out["decomposition"]["residual"].as_f64().unwrap() <= 1e-12);

    let avg = write(dir.path(), "avg.json", AVERAGE);
    let basis = write(
        dir.path(),
        "basis.json",
        r#"[{"lo": [0], "hi": [0.5]}, {"lo": [0.5], "hi": [1]}]"#,
    );
    let out = &stdout_json(&qfock(&[
        "decompose",
        "--op",
        avg.to_str().unwrap(),
        "--basis",
        basis.to_str().unwrap(),
    ]))["outputs"];
    assert_eq!(out["isometry"], false);
    assert_eq!(out["witness"]["violation"], "unimodular");
}

#[test]
fn semigroup_contracts_and_rejects_growth() {
    let dir = tempfile::tempdir().unwrap();
    let span = write(
        dir.path(),
        "span.json",
        &format!(r#"{{"coefficients": [{{"re": 1}}], "functions": [{CONST_04}], "c": 1}}"#),
    );
    let p = span.to_str().unwrap();
    let out = &stdout_json(&qfock(&[
        "semigroup",
        "--span",
        p,
        "--z-re",
        "-0.5",
        "--z-im",
        "1",
    ]))["outputs"];
    assert!(out["norm_after"].as_f64().unwrap() < out["norm_before"].as_f64().unwrap());
    let out = qfock(&["semigroup", "--span", p, "--z-re", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn timings_and_tolerance_flags() {
    let report = stdout_json(&qfock(&[
        "--timings",
        "counterexample",
        "--lambda",
        "0.4",
        "--c",
        "1",
    ]));
    assert!(report["timings_ms"]["counterexample"].is_number());
    let out = Command::new(env!("CARGO_BIN_EXE_qfock"))
        .args(["counterexample", "--lambda", "0.4", "--c", "1"])
        .env("QFOCK_TOL", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn selftest_passes() {
    let out = qfock(&["selftest"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 10);
}
