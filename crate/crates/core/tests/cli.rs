use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hydrostat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hydrostat"))
        .args(args)
        .env("HYDROSTAT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let text = format!("output.dir = {}\n{body}", dir.join("out").display());
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_decay_writes_report_ledger_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "grid.nx = 8\ngrid.ny = 8\ngrid.nz = 4\nscenario.name = decay\nstep.t_end = 0.05\noutput.snapshot_times = 0.02\n",
    );
    let out = hydrostat(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("scenario = decay"));
    assert!(stdout.contains("status = pass"));
    let o = dir.path().join("out");
    assert!(o.join("report.txt").exists());
    assert!(o.join("ledger.csv").exists());
    let snaps = o.join("snapshots");
    assert!(snaps.join("T_0001.snap").exists());
    assert!(snaps.join("T_0002.snap").exists());

    let d = hydrostat(&[
        "diff",
        snaps.join("T_0002.snap").to_str().unwrap(),
        snaps.join("T_0002.snap").to_str().unwrap(),
    ]);
    assert_eq!(d.status.code(), Some(0));
    let text = String::from_utf8(d.stdout).unwrap();
    assert!(text.contains("l2_rms = 0e0"), "{text}");
    assert!(text.contains("linf = 0e0"), "{text}");

    let d = hydrostat(&[
        "diff",
        snaps.join("T_0001.snap").to_str().unwrap(),
        snaps.join("T_0002.snap").to_str().unwrap(),
    ]);
    assert_eq!(d.status.code(), Some(0));
    assert!(!String::from_utf8(d.stdout).unwrap().contains("linf = 0e0"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        "scenario.name = decay\ngrid.nx = many\n",
        "scenario.name = decay\nbogus.key = 1\n",
        "scenario.name = swirl\n",
        "grid.nx = 8\n",
        "scenario.name = decay\nphysics.rt = -1\n",
    ] {
        let cfg = write_config(dir.path(), body);
        let out = hydrostat(&["run", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{body}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("config error"), "{body}");
    }
    let out = hydrostat(&["run", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = hydrostat(&["diff", "/nonexistent/a.snap", "/nonexistent/b.snap"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_hydrostat"))
        .args(["diff", "a", "b"])
        .env("HYDROSTAT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("HYDROSTAT_THREADS"));
}

#[test]
fn numerical_failure_exits_3_with_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        // an unattainable projection tolerance makes every step stall, and with
        // dt_min = dt_max no halving is allowed
        "grid.nx = 8\ngrid.ny = 8\ngrid.nz = 4\nscenario.name = decay\n\
         step.dt_max = 1e-3\nstep.dt_min = 1e-3\nstep.projection_tol = 1e-300\nstep.t_end = 0.01\n",
    );
    let out = hydrostat(&["run", &cfg]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(3), "{stderr}");
    assert!(stderr.contains("checkpoint"), "{stderr}");
    assert!(dir.path().join("out/checkpoint/T_last.snap").exists());
}

#[test]
fn verify_failure_exits_4_and_success_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scenario.criteria = 1\n");
    let out = hydrostat(&["verify", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("check.criterion_1 = pass"));

    // a scenario whose own check cannot hold: eigenmode decay with a step far
    // too coarse for the 1e-3 tolerance
    let cfg = write_config(
        dir.path(),
        "grid.nx = 8\ngrid.ny = 8\ngrid.nz = 4\nscenario.name = eigenmode\nstep.dt_max = 0.2\nstep.t_end = 1\n",
    );
    let out = hydrostat(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
