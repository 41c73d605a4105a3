//! End-to-end checks of the `mec-uplink` binary: outputs and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mec-uplink"));
    cmd.args(args);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.conf");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn solve_p1_prints_csv_to_stdout() {
    let out = run(&["solve-p1", "--fr-ghz", "5", "--rho", "0.95"], None);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("problem,axis,axis_value,fr_ghz,rho_th,q_opt,epsilon_opt"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("p1a,"), "{row}");
    assert!(lines.next().is_none());
}

#[test]
fn writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("base.csv");
    let out = run(&["solve-baseline", "--out", csv.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("base.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "solve-baseline");
    assert_eq!(manifest["rows"], 3);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["gamma0"]["value"].as_f64().unwrap() > 0.0);
    assert!(std::fs::read_to_string(csv).unwrap().lines().count() == 4);
}

#[test]
fn unitless_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = mec_uplink::config::REFERENCE_CONFIG.replace("distance_m = 2000", "distance = 2000");
    let cfg = write_config(dir.path(), &text);
    let out = run(&["solve-p1"], Some(&cfg));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("distance"), "{err}");
    assert!(err.contains("unit"), "{err}");
}

#[test]
fn unknown_key_and_bad_axis_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{}\nfoo_bar = 1\n", mec_uplink::config::REFERENCE_CONFIG);
    let cfg = write_config(dir.path(), &text);
    assert_eq!(run(&["solve-p1"], Some(&cfg)).status.code(), Some(2));
    let out = run(&["sweep", "--axis", "t_th:100:200:5:lin"], None);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["solve-p1", "--rho", "1.5"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn impossible_budget_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let text = mec_uplink::config::REFERENCE_CONFIG.replace("t_th_ms = 400", "t_th_ms = 0.001");
    let cfg = write_config(dir.path(), &text);
    let out = run(&["solve-p2", "--fr-ghz", "1"], Some(&cfg));
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn sweep_with_infeasible_rows_still_writes_them() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let out = run(
        &[
            "sweep",
            "--axis",
            "t_th_ms:1:400:5:lin",
            "--fr-ghz",
            "1",
            "--rho",
            "0.99",
            "--out",
            csv.to_str().unwrap(),
        ],
        None,
    );
    // Sweeps record infeasible points instead of failing.
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.contains(",false,"));
}
