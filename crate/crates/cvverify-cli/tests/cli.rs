use std::path::Path;
use std::process::{Command, Output};

fn cvverify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvverify")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const VACUUM2: &str = r#"{"modes": 2, "cutoffs": [1, 1], "entries": [[0, 0, 1.0, 0.0]]}"#;
const VACUUM1: &str = r#"{"modes": 1, "cutoffs": [1], "entries": [[0, 1.0, 0.0]]}"#;
const FOCK1: &str = r#"{"modes": 1, "cutoffs": [2], "entries": [[1, 1.0, 0.0]]}"#;

#[test]
fn reproduce_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("figs");
    let o = cvverify(&["reproduce", "example2", "--out", out.to_str().unwrap(), "--eta-grid", "0:1:6"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("example2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.lines().next().unwrap().ends_with(",F,W2_12_34,W2_13_24,W1"));
    let svg = std::fs::read_to_string(out.join("example2.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn reproduce_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = cvverify(&["reproduce", "example3", "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        std::fs::read(out.join("example3.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let state = write(dir.path(), "s.json", FOCK1);
    let run = |name: &str, meas: &str| {
        let out = dir.path().join(name);
        let o = cvverify(&[
            "simulate", "--state", &state, "--measurement", meas, "--samples", "500", "--seed", "7", "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv", "homodyne"), run("b.csv", "homodyne"));
    let het = run("c.csv", "heterodyne");
    assert_eq!(het, run("d.csv", "heterodyne"));
    let text = String::from_utf8(het).unwrap();
    assert_eq!(text.lines().next(), Some("shot,re1,im1"));
    assert_eq!(text.lines().count(), 501);
}

#[test]
fn estimate_protocol4_report_recomputes() {
    let dir = tempfile::tempdir().unwrap();
    let state = write(dir.path(), "s.json", VACUUM2);
    let target = write(dir.path(), "t.json", &format!("[{VACUUM1}, {VACUUM1}]"));
    let circuit = write(
        dir.path(),
        "c.json",
        r#"{"beta": [[0.3, 0.0], [0.0, -0.2]], "xi": [[0.0, 0.0], [0.0, 0.0]],
            "U": [[[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]], "eta": [1.0, 1.0]}"#,
    );
    let samples = dir.path().join("s.csv");
    let o = cvverify(&[
        "simulate", "--state", &state, "--cutoff", "8", "--circuit", &circuit, "--measurement", "heterodyne",
        "--samples", "20000", "--seed", "3", "--out", samples.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = cvverify(&[
        "estimate", "--protocol", "4", "--samples", samples.to_str().unwrap(), "--circuit", &circuit, "--target",
        &target, "--partition", "1|2", "--p", "2", "--tau", "0.3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let terms: Vec<f64> =
        report["fidelity_terms"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let value = report["value"].as_f64().unwrap();
    assert_eq!(value, 1.0 - terms.iter().map(|f| 1.0 - f).sum::<f64>());
    assert!((value - 1.0).abs() < 0.15, "{value}");
    assert_eq!(report["partition"], serde_json::json!([[1], [2]]));
}

#[test]
fn estimate_protocol1_on_fock_one() {
    let dir = tempfile::tempdir().unwrap();
    let state = write(dir.path(), "s.json", FOCK1);
    let samples = dir.path().join("h.csv");
    let o = cvverify(&[
        "simulate", "--state", &state, "--measurement", "homodyne", "--samples", "50000", "--out",
        samples.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let o = cvverify(&["estimate", "--protocol", "1", "--samples", samples.to_str().unwrap(), "--target", &state]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((report["value"].as_f64().unwrap() - 1.0).abs() < 0.1);
}

#[test]
fn plan_emits_json() {
    let dir = tempfile::tempdir().unwrap();
    let target = write(dir.path(), "t.json", VACUUM2);
    let o = cvverify(&["plan", "--target", &target, "--k", "1", "--epsilon", "0.1", "--delta", "0.05"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let plan: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(plan["N"].as_u64().unwrap() > 1000);
    assert_eq!(plan["partition"], serde_json::json!([[1], [2]]));
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"modes": 1, "cutoffs": [2]}"#);
    let o = cvverify(&["plan", "--target", &bad, "--epsilon", "0.1", "--delta", "0.05"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.json"));
    let o = cvverify(&["reproduce", "example9", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_plan_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let target = write(dir.path(), "t.json", r#"{"modes": 1, "cutoffs": [3], "entries": [[2, 1.0, 0.0]]}"#);
    let o = cvverify(&["plan", "--target", &target, "--epsilon", "0.01", "--delta", "0.05", "--eta", "0.6"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
