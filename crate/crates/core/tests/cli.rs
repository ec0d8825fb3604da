use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const HALF: &str = r#"{"breakpoints":[0,1],"values":[0.5]}"#;

fn cbf(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbf"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("half.json"), HALF).unwrap();
    std::fs::write(dir.path().join("two.json"), r#"{"breakpoints":[0,0.5,1],"values":[1,0]}"#).unwrap();
    dir
}

#[test]
fn eval_three_methods_agree() {
    let dir = setup();
    let out = cbf(&["eval", "-w", "half.json", "-l", "4", "-m", "product,integral,eta"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for m in ["product", "integral", "eta"] {
        assert!((v["methods"][m]["value"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    }
    assert!(v["max_rel_diff"].as_f64().unwrap() < 1e-10);
}

#[test]
fn eval_at_one_and_lists() {
    let dir = setup();
    let out = cbf(&["eval", "-w", "two.json", "-l", "1"], dir.path());
    assert_eq!(json(&out)["value"].as_f64(), Some(1.0));

    let out = cbf(&["eval", "--weight-json", HALF, "-l", "1,4,9"], dir.path());
    let rows = json(&out);
    let values: Vec<f64> = rows.as_array().unwrap().iter().map(|r| r["value"].as_f64().unwrap()).collect();
    assert_eq!(values.len(), 3);
    assert!((values[2] - 3.0).abs() < 1e-12);

    let out = cbf(&["--csv", "eval", "-w", "half.json", "-l", "4"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("lambda,method,value,log_value\n4,integral,2,"), "{text}");
}

#[test]
fn usage_errors_exit_two() {
    let dir = setup();
    let out = cbf(&["eval", "-w", "half.json", "-l", "-3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(json(&out)["error"].as_str().unwrap().contains("positive"));
    assert!(!out.stderr.is_empty());

    assert_eq!(cbf(&["eval", "-w", "missing.json", "-l", "1"], dir.path()).status.code(), Some(2));
    assert_eq!(cbf(&["eval", "--weight-json", "{\"breakpoints\":[0,1],\"values\":[2]}", "-l", "1"], dir.path()).status.code(), Some(2));
    assert_eq!(cbf(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn convert_both_directions() {
    let dir = setup();
    let v = json(&cbf(&["convert", "--direction", "alpha-to-eta", "-w", "half.json"], dir.path()));
    assert_eq!(v["gamma"].as_f64(), Some(0.0));
    assert_eq!(v["values"], serde_json::json!([0.5]));

    let eta = r#"{"gamma":0,"t_breakpoints":[0],"values":[0.5]}"#;
    let v = json(&cbf(&["convert", "--direction", "eta-to-alpha", "--eta-json", eta], dir.path()));
    assert_eq!(v["c"].as_f64(), Some(1.0));
    assert_eq!(v["alpha"]["values"], serde_json::json!([0.5]));

    let eta = format!(r#"{{"gamma":{},"t_breakpoints":[0],"values":[0.5]}}"#, 5f64.ln());
    let v = json(&cbf(&["convert", "--direction", "eta-to-alpha", "--eta-json", &eta], dir.path()));
    assert!((v["c"].as_f64().unwrap() - 5.0).abs() < 1e-12);

    let out = cbf(&["convert", "--direction", "eta-to-alpha", "--eta-json", "{\"gamma\":0}"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_reports_checks() {
    let dir = setup();
    let out = cbf(&["verify", "-w", "half.json", "--checks", "duality"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["checks"].as_array().unwrap().len(), 1);

    let out = cbf(&["verify", "-w", "two.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["seed"].as_u64(), Some(42));

    // two.json is not segment-wise comparable with half.json
    let out = cbf(&["verify", "-w", "two.json", "--checks", "monotone", "--weight-b", "half.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn levy_half_stable() {
    let dir = setup();
    let v = json(&cbf(&["levy", "-w", "half.json"], dir.path()));
    assert_eq!(v["a"].as_f64(), Some(0.0));
    assert_eq!(v["b"].as_f64(), Some(0.0));
    let m1 = v["point_density"][0]["m"].as_f64().unwrap();
    assert!((m1 - 0.28209).abs() < 1e-5, "{m1}");

    let out = cbf(&["levy", "-w", "half.json", "--out", "triple.json", "--verify"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let triple: Value = serde_json::from_slice(&std::fs::read(dir.path().join("triple.json")).unwrap()).unwrap();
    assert_eq!(triple["m"].as_array().unwrap().len(), 200);
}

#[test]
fn simulate_then_laplace_check() {
    let dir = setup();
    let out = cbf(
        &["simulate", "--weight", "half.json", "--paths", "100000", "--horizon", "1", "--epsilon", "1e-3", "--seed", "42", "--out", "paths.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = cbf(&["laplace-check", "--bundle", "paths.csv", "--lambda-grid", "0.5,1,2,4", "--t", "1", "--json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["cells"].as_array().unwrap().len(), 4);

    // a wrong weight override must fail the check
    let out = cbf(
        &["laplace-check", "--bundle", "paths.csv", "--lambda-grid", "0.5,2,4", "--weight-json", r#"{"breakpoints":[0,1],"values":[0.9]}"#],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_leave_no_files() {
    let dir = setup();
    for args in [
        vec!["simulate", "-w", "half.json", "--paths", "0", "--out", "bad.csv"],
        vec!["simulate", "-w", "half.json", "--epsilon", "-1", "--out", "bad.csv"],
        vec!["simulate", "-w", "nope.json", "--out", "bad.csv"],
        vec!["levy", "-w", "half.json", "--points", "1", "--out", "bad.csv"],
    ] {
        assert_eq!(cbf(&args, dir.path()).status.code(), Some(2), "{args:?}");
        assert!(!dir.path().join("bad.csv").exists(), "{args:?}");
    }
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers.len(), 2, "{leftovers:?}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = setup();
    let cases: [&[&str]; 4] = [
        &["eval", "-w", "half.json", "-l", "0.3,4", "-m", "product,integral,eta,quadrature"],
        &["verify", "-w", "two.json", "--seed", "7", "--samples", "300"],
        &["levy", "-w", "half.json", "--points", "40"],
        &["simulate", "-w", "half.json", "--paths", "2000", "--seed", "9"],
    ];
    for args in cases {
        let a = cbf(args, dir.path());
        let b = cbf(&[&["--threads", "2"], args].concat(), dir.path());
        assert_eq!(a.status.code(), Some(0), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}
