use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/two_level.json")
}

fn qlyap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlyap"))
        .args(args)
        .env("QLYAP_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_variant(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fixture()).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join("variant.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

#[test]
fn check_reports_all_assumptions() {
    let out = qlyap(&["check", fixture().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for a in ["a2", "a3", "a4", "a5"] {
        assert_eq!(v[a]["holds"], true, "{a}");
    }
}

#[test]
fn check_exits_1_when_an_assumption_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), |v| {
        v["X"] = serde_json::json!([[[0, 0], [1, 0]], [[1, 0], [0, 0]]]);
    });
    let out = qlyap(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["a4"]["holds"], false);
}

#[test]
fn simulate_is_byte_identical_and_matches_golden() {
    let f = fixture();
    let args = ["simulate", f.to_str().unwrap(), "--seed", "7", "--dt", "1e-3", "--t-final", "0.5", "--amplitudes"];
    let a = qlyap(&args);
    let b = qlyap(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let golden = std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/two_level_seed7.csv")).unwrap();
    assert_eq!(a.stdout, golden);
}

#[test]
fn simulate_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let f = fixture();
    let out = qlyap(&["simulate", f.to_str().unwrap(), "--seed", "3", "--t-final", "0.01", "-o", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    let headers: Vec<String> = rdr.headers().unwrap().iter().map(str::to_owned).collect();
    assert_eq!(headers, ["t", "V", "fidelity", "X_mean", "u_1"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 11);
    assert_eq!(&rows[10][4], "");
    let v0: f64 = rows[0][1].parse().unwrap();
    assert!((v0 - 0.32).abs() < 1e-15);
    let u0: f64 = rows[0][4].parse().unwrap();
    assert!((u0 - 0.8).abs() < 1e-15);
}

#[test]
fn ensemble_reports_summary_and_gate() {
    let f = fixture();
    let out = qlyap(&["ensemble", f.to_str().unwrap(), "--trials", "120", "--t-final", "1.0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["summary"]["trials"], 120);
    assert_eq!(v["summary"]["sup_distance_exceed_prob"].as_array().unwrap().len(), 3);
    assert_eq!(v["supermartingale"]["passes"], true);
}

#[test]
fn reversed_controller_trips_the_gate() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), |v| {
        v["k_strength"] = serde_json::json!(0.2);
        v["record_points"] = serde_json::json!(8);
    });
    let out = qlyap(&["ensemble", path.to_str().unwrap(), "--trials", "300", "--t-final", "2", "--controller", "reversed-lyapunov"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["supermartingale"]["passes"], false);
}

#[test]
fn invariant_set_and_escape_emit_json() {
    let f = fixture();
    let out = qlyap(&["invariant-set", f.to_str().unwrap(), "--grid-points", "10"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["target_choice"]["contains_target"], true);
    let out = qlyap(&["escape", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["full_rank"], true);
}

#[test]
fn report_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("report");
    let f = fixture();
    let out = qlyap(&["report", f.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--trials", "100", "--t-final", "0.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["check.json", "trajectory.csv", "ensemble.json", "invariant_set.json", "escape.json"] {
        assert!(out_dir.join(name).is_file(), "{name}");
    }
}

#[test]
fn usage_and_validation_errors() {
    let out = qlyap(&["transmogrify"]);
    assert_eq!(out.status.code(), Some(64));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(qlyap(&[]).status.code(), Some(64));
    assert_eq!(qlyap(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let path = write_variant(dir.path(), |v| v["psi_f"] = serde_json::json!([[0.9, 0.0], [0.0, 0.0]]));
    let out = qlyap(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("psi_f"));

    let out = qlyap(&["simulate", fixture().to_str().unwrap(), "--controller", "bang-bang"]);
    assert_eq!(out.status.code(), Some(1));
    let out = qlyap(&["check", "/nonexistent/definition.json"]);
    assert_eq!(out.status.code(), Some(1));
}
