//! End-to-end tests against the built binary: exit codes, file outputs,
//! config precedence, determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

const BIN: &str = env!("CARGO_BIN_EXE_tpms-cpia");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary spawns")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn verify_reports_are_byte_identical() {
    let dir = tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let res = run(&["verify", "--seed", "42", "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "verify failed: {}", stderr_of(&res));
    }
    let a = fs::read(out_a.join("report.json")).unwrap();
    let b = fs::read(out_b.join("report.json")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn tampered_transform_fails_verification() {
    let dir = tempdir().unwrap();
    let res = run(&[
        "verify",
        "--seed",
        "42",
        "--tamper-t1d",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));

    let report: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("report.json"))).unwrap();
    assert_eq!(report["all_pass"], serde_json::Value::Bool(false));
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == serde_json::Value::Bool(false))
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["transform_eigen_moduli_unit"]);
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"command": "verify", "foo": 1}"#).unwrap();
    let res = run(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr_of(&res).contains("foo"), "stderr: {}", stderr_of(&res));
}

#[test]
fn undersized_net_is_a_config_error() {
    let dir = tempdir().unwrap();
    let res = run(&[
        "fit",
        "--surface",
        "schwarz_p",
        "--n",
        "6",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    let err = stderr_of(&res);
    assert!(err.contains("n >= 7"), "stderr: {err}");
}

#[test]
fn missing_command_is_a_config_error() {
    let res = run(&[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr_of(&res).contains("no command"));
}

#[test]
fn fit_end_to_end_writes_all_outputs() {
    let dir = tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = run(&[
        "fit", "--surface", "schwarz_p", "--n", "7", "--tol", "1e-8", "--out", out,
    ]);
    assert!(res.status.success(), "fit failed: {}", stderr_of(&res));

    let net = read(&dir.path().join("net.csv"));
    let lines: Vec<&str> = net.lines().collect();
    assert_eq!(lines[0], "index,x,y,z");
    assert_eq!(lines.len(), 1 + 49);
    assert!(lines[1].starts_with("1,"));

    let log = read(&dir.path().join("log.csv"));
    assert!(log.starts_with("k,step_norm,limit_gap\n"));
    assert!(log.lines().count() > 2);

    let summary: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("summary.json"))).unwrap();
    assert_eq!(summary["converged"], serde_json::Value::Bool(true));
    let rho = summary["spectral_radius"].as_f64().unwrap();
    assert!(rho > 0.0 && rho < 1.0, "rho = {rho}");
    let ratio = summary["contraction_estimate"].as_f64().unwrap();
    assert!(ratio > 0.0 && ratio < 1.0, "ratio = {ratio}");
}

#[test]
fn two_patch_fit_writes_a_doubled_net() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    // config asks for n = 10; the flag must win
    fs::write(
        &cfg,
        r#"{"command": "fit", "surface": "diamond", "n": 10, "tol": 1e-8}"#,
    )
    .unwrap();
    let res = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "8",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(res.status.success(), "fit failed: {}", stderr_of(&res));
    let net = read(&dir.path().join("net.csv"));
    assert_eq!(net.lines().count(), 1 + 2 * 64);
}

#[test]
fn matrices_dump_matches_known_entries() {
    let dir = tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = run(&["matrices", "--n", "8", "--which", "m:1:2", "--which", "alpha:1", "--out", out]);
    assert!(res.status.success(), "matrices failed: {}", stderr_of(&res));

    let csv = read(&dir.path().join("m_1_2.csv"));
    assert_eq!(csv, "row,col,value\n16,17,1\n24,25,1\n32,33,1\n40,41,1\n");

    let report: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("matrices.json"))).unwrap();
    let entries = report.as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert_eq!(entries[0]["name"], "m_1_2");
    assert_eq!(entries[0]["rank"], 4);
    assert_eq!(entries[1]["name"], "alpha_1");
    assert_eq!(entries[1]["rank"], 2);
    assert_eq!(entries[1]["eigen"]["unit_count"], 2);
    assert_eq!(entries[1]["eigen"]["zero_count"], 62);
}

#[test]
fn matrices_with_nothing_requested_is_a_config_error() {
    let res = run(&["matrices", "--n", "8"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr_of(&res).contains("--which"));
}

#[test]
fn bad_matrix_spec_is_a_config_error() {
    let dir = tempdir().unwrap();
    let res = run(&[
        "matrices", "--n", "8", "--which", "bogus", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr_of(&res).contains("bogus"));
}

#[test]
fn derivatives_table_has_the_documented_columns() {
    let dir = tempdir().unwrap();
    let res = run(&[
        "derivatives",
        "--samples",
        "4,4",
        "--grid",
        "32",
        "--refine-levels",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(res.status.success(), "derivatives failed: {}", stderr_of(&res));

    let csv = read(&dir.path().join("derivatives.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 25);
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(header.len(), 27);
    assert_eq!(header[0], "re_tau");
    assert_eq!(header[20], "a1");
    assert_eq!(&header[24..], ["xpp", "ypp", "zpp"]);
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 27);
    }

    let max: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("max.json"))).unwrap();
    let max_abs = max["max_abs"].as_f64().unwrap();
    assert!((max_abs - 4.0).abs() < 1e-3, "max_abs = {max_abs}");
    assert_eq!(max["component"], "z");
}

#[test]
fn sample_writes_grid_and_mesh() {
    let dir = tempdir().unwrap();
    let res = run(&[
        "sample",
        "--surface",
        "gyroid",
        "--samples",
        "6,6",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(res.status.success(), "sample failed: {}", stderr_of(&res));

    let grid = read(&dir.path().join("grid.csv"));
    assert_eq!(grid.lines().count(), 1 + 49);
    assert!(grid.starts_with("i,j,x,y,z\n"));

    let obj = read(&dir.path().join("mesh.obj"));
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 49);
    assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 2 * 36);
}

#[test]
fn saved_grid_feeds_a_fit() {
    let dir = tempdir().unwrap();
    let sample_out = dir.path().join("s");
    let res = run(&[
        "sample",
        "--surface",
        "schwarz_p",
        "--samples",
        "7,7",
        "--out",
        sample_out.to_str().unwrap(),
    ]);
    assert!(res.status.success());

    let fit_out = dir.path().join("f");
    let grid = sample_out.join("grid.csv");
    let res = run(&[
        "fit",
        "--surface",
        "schwarz_p",
        "--n",
        "8",
        "--tol",
        "1e-8",
        "--data",
        grid.to_str().unwrap(),
        "--out",
        fit_out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "fit failed: {}", stderr_of(&res));
    let summary: serde_json::Value =
        serde_json::from_str(&read(&fit_out.join("summary.json"))).unwrap();
    assert_eq!(summary["converged"], serde_json::Value::Bool(true));
}

#[test]
fn wrong_sized_data_grid_is_a_config_error() {
    let dir = tempdir().unwrap();
    let sample_out = dir.path().join("s");
    run(&[
        "sample",
        "--surface",
        "schwarz_p",
        "--samples",
        "5,5",
        "--out",
        sample_out.to_str().unwrap(),
    ]);
    let res = run(&[
        "fit",
        "--surface",
        "schwarz_p",
        "--n",
        "8",
        "--data",
        sample_out.join("grid.csv").to_str().unwrap(),
        "--out",
        dir.path().join("f").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr_of(&res).contains("8x8"));
}

#[test]
fn thread_cap_env_is_validated() {
    let dir = tempdir().unwrap();
    let bad = Command::new(BIN)
        .args(["verify", "--out", dir.path().to_str().unwrap()])
        .env("TPMS_CPIA_THREADS", "abc")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr_of(&bad).contains("TPMS_CPIA_THREADS"));

    let good = Command::new(BIN)
        .args(["verify", "--samples", "25", "--out", dir.path().to_str().unwrap()])
        .env("TPMS_CPIA_THREADS", "1")
        .output()
        .unwrap();
    assert!(good.status.success(), "stderr: {}", stderr_of(&good));
}

#[test]
fn gyroid_fit_accepts_a_custom_assignment() {
    let dir = tempdir().unwrap();
    let res = run(&[
        "fit",
        "--surface",
        "gyroid",
        "--n",
        "8",
        "--tol",
        "1e-8",
        "--gyroid-assignment",
        "4,6,1,2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(res.status.success(), "fit failed: {}", stderr_of(&res));
    let summary: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("summary.json"))).unwrap();
    assert_eq!(summary["converged"], serde_json::Value::Bool(true));
}

#[test]
fn out_of_range_assignment_is_a_config_error() {
    let res = run(&[
        "fit", "--surface", "gyroid", "--n", "8", "--gyroid-assignment", "4,6,1,9",
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr_of(&res).contains("1..=7"));
}
