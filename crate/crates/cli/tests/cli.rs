use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dlag(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlag"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn dlag")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn max_diff_of(report: &Value) -> f64 {
    report["summary"]["max_diff"].as_str().unwrap().parse().unwrap()
}

#[test]
fn iterate_matches_quadrature_on_n1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlag(dir.path(), &["--preset", "n1", "iterate", "--nmax", "8", "--compare-quadrature"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("dlag-iterate.json"));
    assert_eq!(report["schema"], 1);
    assert_eq!(report["pass"], true);
    assert!(max_diff_of(&report) < 1e-25);
    assert_eq!(report["data"]["columns"][0], "n");
}

#[test]
fn printed_ratio_step_fails_comparison() {
    // the ratio steps differ only for two deformations with distinct exponents
    let dir = tempfile::tempdir().unwrap();
    let ok = dlag(dir.path(), &["--alpha", "1", "--t", "1,2", "--lambda", "0.5,1.5", "iterate", "--compare-quadrature"]);
    assert_eq!(ok.status.code(), Some(0));
    let out = dlag(
        dir.path(),
        &["--alpha", "1", "--t", "1,2", "--lambda", "0.5,1.5", "iterate", "--nmax", "8", "--compare-quadrature", "--de3", "printed"],
    );
    assert_eq!(out.status.code(), Some(1));
    let report = read_json(&dir.path().join("dlag-iterate.json"));
    assert_eq!(report["pass"], false);
    assert_eq!(report["failures"][0], "max_diff");
}

#[test]
fn undeformed_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlag(dir.path(), &["--alpha", "2", "verify", "--identities", "s1", "--n", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("dlag-verify.json"));
    let entries = report["report"].as_object().unwrap();
    assert!(!entries.is_empty());
    assert!(entries.keys().all(|k| k.ends_with("/s1")));
    assert!(report["config"]["deformations"].as_array().unwrap().is_empty());
}

#[test]
fn verify_all_on_presets() {
    let dir = tempfile::tempdir().unwrap();
    for preset in ["n1", "n2"] {
        let out = dlag(dir.path(), &["--preset", preset, "verify", "--n", "4"]);
        assert_eq!(out.status.code(), Some(0), "{preset}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn negative_lambda_density_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlag(dir.path(), &["--alpha", "1", "--t", "1", "--lambda", "-0.5", "density", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda_k >= 0"));
    assert!(!dir.path().join("dlag-density.json").exists());
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &["--preset", "n1", "verify", "--n", "3", "--identities", "nope"],
        &["--t", "1,2", "--lambda", "1", "table"],
        &["--preset", "n2", "scale", "--s", "[1]"],
        &["--preset", "n1", "scale", "--s", "not json"],
        &["--alpha", "-1.5", "table"],
    ];
    for args in cases {
        assert_eq!(dlag(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
    std::fs::write(dir.path().join("bad.json"), r#"{"alpha": "1", "colour": "red"}"#).unwrap();
    assert_eq!(dlag(dir.path(), &["--config", "bad.json", "table"]).status.code(), Some(2));
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"alpha": "0.5", "deformations": [{"t": "2", "lambda": "1.5"}], "precision_bits": 256, "quad_m": 120}"#,
    )
    .unwrap();
    let out = dlag(dir.path(), &["--config", "cfg.json", "--alpha", "1.25", "table", "--nmax", "3", "--out", "t.json"]);
    assert_eq!(out.status.code(), Some(0));
    let report = read_json(&dir.path().join("t.json"));
    let cfg = &report["config"];
    assert_eq!(cfg["alpha"], "1.25");
    assert_eq!(cfg["deformations"][0]["t"], "2");
    assert_eq!(cfg["deformations"][0]["lambda"], "1.5");
    assert_eq!(cfg["precision_bits"], 256);
    assert_eq!(cfg["quadrature"]["m"], 120);
    assert_eq!(report["data"]["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn csv_output_writes_data_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlag(dir.path(), &["--preset", "n1", "--format", "csv", "aux", "--nmax", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("dlag-aux.csv")).unwrap();
    assert!(csv.starts_with("n,k,R,r"));
    assert_eq!(csv.lines().count(), 1 + 5);
    let report = read_json(&dir.path().join("dlag-aux.json"));
    assert!(report.get("data").is_none());
    assert_eq!(report["command"], "aux");
}

#[test]
fn output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--preset", "n2", "residuals", "--set", "toda", "--n", "2", "--out"];
    let a = dlag(dir.path(), &[&args[..], &["a.json"]].concat());
    let b = dlag(dir.path(), &[&args[..], &["b.json"]].concat());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(b.status.code(), Some(0));
    let ta = std::fs::read(dir.path().join("a.json")).unwrap();
    let tb = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn residual_sets_pass_on_n1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlag(dir.path(), &["--preset", "n1", "residuals", "--n", "3", "--point", "0.75"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = read_json(&dir.path().join("dlag-residuals.json"));
    assert_eq!(report["summary"]["t"][0].as_str().unwrap().parse::<f64>().unwrap(), 0.75);
    let names: Vec<&String> = report["report"].as_object().unwrap().keys().collect();
    assert!(names.len() > 10);
}

#[test]
fn scale_piii_on_n1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlag(dir.path(), &["--preset", "n1", "scale", "--s", r#"["1"]"#, "--check", "piii"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = read_json(&dir.path().join("dlag-scale.json"));
    assert!(report["report"].get("sigma_piii").is_some());
    assert_eq!(report["summary"]["converging"], true);
    assert_eq!(report["data"]["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn density_report_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dlag(dir.path(), &["--preset", "n1", "density", "--n", "20", "--samples", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = read_json(&dir.path().join("dlag-density.json"));
    let a: f64 = report["summary"]["a"].as_str().unwrap().parse().unwrap();
    let b: f64 = report["summary"]["b"].as_str().unwrap().parse().unwrap();
    assert!(0.0 < a && a < b);
    let rows = report["data"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    for r in rows {
        let psi: f64 = r[1].as_str().unwrap().parse().unwrap();
        assert!(psi > 0.0);
    }
}
