//! End-to-end tests of the `lab` binary: exit codes, report determinism,
//! and the build -> solve -> foliate -> report pipeline at small sizes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lab"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    lab()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lab_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn obstruction_verdicts_and_exit_codes() {
    let dir = tempdir("obstruction");
    let out = run(&["obstruction", "--m", "1", "--p", "1", "--q", "3", "--out", "r.json"], &dir);
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("verdict=obstructed"), "{stdout}");
    let json = std::fs::read_to_string(dir.join("r.json")).unwrap();
    assert!(json.contains("\"verdict\": \"obstructed\""), "{json}");

    // Boundary case: |Q| = 1 + P.
    let out = run(&["obstruction", "--m", "1", "--p", "1", "--q", "2"], &dir);
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict=not-obstructed"));

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn validation_failures_exit_2() {
    let dir = tempdir("validation");
    // missing file
    let out = run(
        &["solve", "--v", "missing.field", "--epsilon", "0.01", "--out", "s.bin"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(2), "{out:?}");
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("`v`") && msg.contains("missing.field"), "{msg}");

    // unknown flag
    let out = run(&["obstruction", "--m", "1", "--bogus", "1"], &dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));

    // unknown command
    let out = run(&["frobnicate"], &dir);
    assert_eq!(out.status.code(), Some(2));

    // bad numeric value names the parameter
    let out = run(&["obstruction", "--m", "one"], &dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`m`"));

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn reports_are_byte_identical_for_same_seed() {
    let dir = tempdir("determinism");
    for name in ["a.json", "b.json"] {
        let out = run(
            &["lemmas", "--m", "1", "--trials", "50", "--seed", "7", "--out", name],
            &dir,
        );
        assert!(out.status.success(), "{out:?}");
    }
    let a = std::fs::read(dir.join("a.json")).unwrap();
    let b = std::fs::read(dir.join("b.json")).unwrap();
    assert_eq!(a, b, "reports differ between identical runs");

    let out = run(
        &["lemmas", "--m", "1", "--trials", "50", "--seed", "8", "--out", "c.json"],
        &dir,
    );
    assert!(out.status.success());
    let c = std::fs::read(dir.join("c.json")).unwrap();
    assert_ne!(a, c, "seed change must alter the report");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_file_defaults_are_overridden_by_flags() {
    let dir = tempdir("config");
    std::fs::write(dir.join("lab.conf"), "m = 1\nq = 3\n").unwrap();
    // config supplies q = 3 (obstructed)
    let out = run(&["obstruction", "--config", "lab.conf"], &dir);
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict=obstructed"));
    // flag overrides config
    let out = run(&["obstruction", "--config", "lab.conf", "--q", "0"], &dir);
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict=not-obstructed"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn pipeline_build_solve_foliate_sweep_report() {
    let dir = tempdir("pipeline");

    // Build a mild potential at a small grid.
    let out = run(
        &[
            "build-potential",
            "--m", "1", "--a", "0", "--b", "0.5",
            "--margin", "0.1", "--n", "32", "--l", "4",
            "--out", "v.field", "--report", "v.json", "--csv", "v.csv",
        ],
        &dir,
    );
    assert!(out.status.success(), "{out:?}");
    assert!(dir.join("v.field").exists() && dir.join("v.json").exists());
    let vjson = std::fs::read_to_string(dir.join("v.json")).unwrap();
    assert!(vjson.contains("\"schema\": 1"));
    let csv = std::fs::read_to_string(dir.join("v.csv")).unwrap();
    assert!(csv.starts_with("x1,y1,value"));

    // Solve.
    let out = run(
        &[
            "solve",
            "--v", "v.field", "--epsilon", "0.05", "--nt", "8",
            "--out", "sol.bin", "--report", "sol.json",
        ],
        &dir,
    );
    assert!(out.status.success(), "{out:?}");
    let sol_json = std::fs::read_to_string(dir.join("sol.json")).unwrap();
    assert!(sol_json.contains("residualNorm"));

    // Foliate from three starts.
    std::fs::write(dir.join("starts.json"), "[[0.0,0.0],[0.2,0.0],[0.0,0.25]]").unwrap();
    let out = run(
        &[
            "foliate",
            "--sol", "sol.bin", "--starts", "starts.json",
            "--out", "traces.json", "--step", "0.02",
        ],
        &dir,
    );
    assert!(out.status.success(), "{out:?}");
    let traces: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("traces.json")).unwrap()).unwrap();
    assert_eq!(traces["traces"].as_array().unwrap().len(), 3);
    assert!(traces["traces"][0]["ok"].as_bool().unwrap());

    // Sweep two epsilon levels and emit CSV + JSON.
    let out = run(
        &[
            "sweep",
            "--v", "v.field", "--schedule", "0.1,0.05", "--nt", "8",
            "--csv", "sweep.csv", "--report", "sweep.json",
        ],
        &dir,
    );
    assert!(out.status.success(), "{out:?}");
    let csv = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("epsilon,C0,C1,C2,C3,thirdDerivDiagnostic"));

    // Combine sweep reports into plot CSVs.
    let out = run(
        &["report", "--sweeps", "sweep.json", "--out-dir", "plots"],
        &dir,
    );
    assert!(out.status.success(), "{out:?}");
    let combined = std::fs::read_to_string(dir.join("plots/combined.csv")).unwrap();
    assert!(combined.starts_with("run,epsilon,C0,C1,C2,C3,thirdDerivDiagnostic"));
    assert_eq!(combined.lines().count(), 3);
    assert!(dir.join("plots/sweep.csv").exists());

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn numerical_failures_exit_3() {
    let dir = tempdir("numerical");
    // Margin above the positivity reserve of I + a is a validation error.
    let out = run(
        &[
            "build-potential",
            "--m", "1", "--a", "0", "--b", "3", "--margin", "5.0",
            "--n", "32", "--out", "v.field",
        ],
        &dir,
    );
    assert_eq!(out.status.code(), Some(2), "{out:?}");

    // A Newton tolerance below the rounding floor stalls the solver: that is
    // a numerical failure.
    let out = run(
        &[
            "build-potential",
            "--m", "1", "--a", "0", "--b", "0.5", "--margin", "0.1",
            "--n", "32", "--out", "v.field",
        ],
        &dir,
    );
    assert!(out.status.success(), "{out:?}");
    let out = run(
        &[
            "solve",
            "--v", "v.field", "--epsilon", "0.05", "--nt", "8",
            "--newton-tol", "1e-30", "--out", "s.bin",
        ],
        &dir,
    );
    assert_eq!(out.status.code(), Some(3), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("no convergence"));
    std::fs::remove_dir_all(&dir).ok();
}
