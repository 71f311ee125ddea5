use std::path::Path;
use std::process::{Command, Output};

fn lab(dir: &Path, config: Option<&str>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_willmore-lab"));
    cmd.current_dir(dir);
    if let Some(text) = config {
        std::fs::write(dir.join("run.json"), text).unwrap();
        cmd.args(["--config", "run.json"]);
    }
    cmd.args(args).output().unwrap()
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn round_curvature_report() {
    let d = tempfile::tempdir().unwrap();
    let out = lab(d.path(), None, &["--out", "o", "curvature"]);
    assert_eq!(out.status.code(), Some(0));
    let mut rows = csv::Reader::from_path(d.path().join("o/curvature.csv")).unwrap();
    let headers = rows.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "scalar").unwrap();
    let mut n = 0;
    for r in rows.records() {
        let r = r.unwrap();
        assert!((r[col].parse::<f64>().unwrap() - 6.0).abs() < 1e-12);
        n += 1;
    }
    assert_eq!(n, 3);
}

#[test]
fn seeded_runs_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{"metric": {"kind": "berger", "lambda": 1.2}, "random_points": 3, "seed": 17}"#;
    assert_eq!(lab(d.path(), Some(cfg), &["--out", "a", "curvature"]).status.code(), Some(0));
    assert_eq!(lab(d.path(), Some(cfg), &["--out", "b", "curvature"]).status.code(), Some(0));
    for f in ["curvature.csv", "curvature.json"] {
        assert_eq!(read(d.path(), &format!("a/{f}")), read(d.path(), &format!("b/{f}")));
    }
    assert_eq!(read(d.path(), "a/curvature.csv").lines().count(), 7);
    let other = lab(d.path(), Some(cfg), &["--seed", "18", "--out", "c", "curvature"]);
    assert_eq!(other.status.code(), Some(0));
    assert_ne!(read(d.path(), "a/curvature.csv"), read(d.path(), "c/curvature.csv"));
}

#[test]
fn malformed_config_exits_with_one() {
    let d = tempfile::tempdir().unwrap();
    let out = lab(d.path(), Some("{\n  \"solver\": {\"lmax\": 8,}\n}"), &["curvature"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let out = lab(d.path(), Some(r#"{"solver": {"lmax": 1}}"#), &["curvature"]);
    assert_eq!(out.status.code(), Some(1));
    let out = lab(d.path(), None, &["--out", "o", "verify", "--suite", "nonsense"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reduce_on_round_metric_gives_zero_graph() {
    let d = tempfile::tempdir().unwrap();
    let out = lab(d.path(), Some(r#"{"solver": {"lmax": 6}}"#), &["--out", "o", "reduce", "--rho", "1.0"]);
    assert_eq!(out.status.code(), Some(0));
    let mut rows = csv::Reader::from_path(d.path().join("o/w.csv")).unwrap();
    assert_eq!(rows.headers().unwrap(), vec!["l", "m", "coeff"]);
    for r in rows.records() {
        assert_eq!(r.unwrap()[2].parse::<f64>().unwrap(), 0.0);
    }
    let reduced: serde_json::Value = serde_json::from_str(&read(d.path(), "o/reduced.json")).unwrap();
    assert_eq!(reduced["converged"], true);
    assert!(reduced["phi"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn unsolved_auxiliary_equation_exits_with_two() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{"metric": {"kind": "berger", "lambda": 1.2, "epsilon": 0.25}, "solver": {"lmax": 6, "max_iter": 1, "tol": 1e-12}}"#;
    let out = lab(d.path(), Some(cfg), &["--out", "o", "reduce", "--rho", "1.0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("auxiliary"));
    assert!(d.path().join("o/reduced.json").exists());
}

#[test]
fn spectral_suite_passes() {
    let d = tempfile::tempdir().unwrap();
    let out = lab(d.path(), None, &["--out", "o", "verify", "--suite", "spectral"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
    let text = read(d.path(), "o/verify.csv");
    assert!(text.starts_with("id,name,passed,detail\n3,spectral law,true,"));
}

#[test]
fn classify_berger_direction() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{"metric": {"kind": "round_plus_tensor", "h": "berger", "epsilon": 0.05}}"#;
    let out = lab(d.path(), Some(cfg), &["--out", "o", "classify"]);
    assert_eq!(out.status.code(), Some(0));
    let c: serde_json::Value = serde_json::from_str(&read(d.path(), "o/classification.json")).unwrap();
    assert_eq!(c["case"], "I");
    assert_eq!(c["k0"], 2);
}

#[test]
fn sphere_and_energy_outputs() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"{"solver": {"lmax": 8}}"#;
    assert_eq!(
        lab(d.path(), Some(cfg), &["--out", "o", "sphere", "--rho", "0.9", "--p", "0,1,0,0"])
            .status
            .code(),
        Some(0)
    );
    let mut rows = csv::Reader::from_path(d.path().join("o/sphere.csv")).unwrap();
    let h = 2.0 / 0.9f64.tan();
    for r in rows.records() {
        assert!((r.unwrap()[3].parse::<f64>().unwrap() - h).abs() < 1e-9);
    }
    assert_eq!(lab(d.path(), Some(cfg), &["--out", "e", "energy", "--rho", "0.9"]).status.code(), Some(0));
    let e: serde_json::Value = serde_json::from_str(&read(d.path(), "e/energy.json")).unwrap();
    let w = e["energy"]["W"].as_f64().unwrap();
    assert!((w - 4.0 * std::f64::consts::PI).abs() < 1e-9, "{w}");
    let out = lab(d.path(), None, &["--out", "x", "sphere", "--rho", "0.9", "--p", "1,2"]);
    assert_eq!(out.status.code(), Some(1));
}
