use std::path::Path;
use std::process::{Command, Output};

fn zakai(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zakai"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const SMALL: &str = "[problem]\nname = \"heat1d\"\n[time]\nn = 32\n";

#[test]
fn passing_run_writes_the_documented_files() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.toml", SMALL);
    let out = zakai(&["converge", "--config", "c.toml", "--out", "res"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(tmp.path().join("res/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);
    assert!(report.starts_with("h,sup_error,l2h_error,pairwise_order,ls_order,expected_order,pass\n"));
    for f in ["rung_0.csv", "rung_2.csv", "stability.csv", "plot.gp"] {
        assert!(tmp.path().join("res").join(f).exists(), "{f}");
    }
}

#[test]
fn out_of_band_order_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.toml", &format!("{SMALL}[expect]\norder = 1.0\ntolerance = 0.2\n"));
    let out = zakai(&["converge", "--config", "c.toml", "--out", "res"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(std::fs::read_to_string(tmp.path().join("res/report.csv")).unwrap().contains(",false"));
}

#[test]
fn configuration_errors_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("rungs.toml", format!("{SMALL}[ladder]\nrungs = 1\n")),
        ("unknown.toml", format!("{SMALL}[time]\nsteps = 4\n")),
        ("syntax.toml", "[problem\nname = 1\n".to_string()),
        ("missing.toml", "[time]\nn = 4\n".to_string()),
    ];
    for (name, text) in &cases {
        write(tmp.path(), name, text);
        let out = zakai(&["accelerate", "--config", name], tmp.path());
        assert_eq!(out.status.code(), Some(3), "{name}");
    }
    let out = zakai(&["converge", "--config", "absent.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    let out = zakai(&["converge"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    write(tmp.path(), "ok.toml", SMALL);
    let out = zakai(&["converge", "--config", "ok.toml", "--seeds", "1,x"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn syntax_errors_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.toml", "[problem]\nname = \"heat1d\"\n\n[time]\nn = = 3\n");
    let out = zakai(&["converge", "--config", "c.toml"], tmp.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 5"));
}

#[test]
fn solve_exports_binary_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.toml", "[problem]\nname = \"degenerate1d\"\n[time]\nn = 8\n");
    let out = zakai(&["solve", "--config", "c.toml", "--seeds", "3,4", "--format", "binary", "--out", "s"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let bytes = std::fs::read(tmp.path().join("s/trajectory_seed4.bin")).unwrap();
    let traj = zakai_core::io::read_trajectory_binary(bytes.as_slice()).unwrap();
    assert_eq!((traj.steps(), traj.grid().points()), (8, &[16][..]));
    let summary = std::fs::read_to_string(tmp.path().join("s/solve.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 9);
}

#[test]
fn synthetic_mode_reports_the_injected_order() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "c.toml", &format!("{SMALL}[expect]\nsynthetic_order = 3.0\norder = 3.0\n"));
    let out = zakai(&["converge", "--config", "c.toml", "--out", "r"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let report = std::fs::read_to_string(tmp.path().join("r/report.csv")).unwrap();
    let ls: f64 = report.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    assert!((ls - 3.0).abs() < 1e-10);
}

#[test]
fn selfcheck_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = zakai(&["selfcheck"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().filter(|l| l.starts_with("PASS")).count(), 4);
}
