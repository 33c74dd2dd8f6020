use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hqp::io::parse_solution;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn hqp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hqp")).args(args).output().expect("binary runs")
}

fn run_solve(name: &str, out: &Path) -> Output {
    hqp(&["solve", fixture(name).to_str().unwrap(), "--out", out.to_str().unwrap()])
}

#[test]
fn conflict_fixture_relaxes_second_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sol.txt");
    let res = run_solve("conflict_1d.hqp", &out);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let sol = parse_solution(&std::fs::read_to_string(&out).unwrap()).unwrap();
    // z <= 0 wins, so z >= 1 must move by one unit.
    assert!(sol.z[0] <= 1e-8);
    assert!((sol.eps[1][0] - 1.0).abs() < 1e-4, "eps = {:?}", sol.eps);
    assert_eq!(sol.eps[0], vec![0.0]);
}

#[test]
fn malformed_file_exits_1_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sol.txt");
    let res = run_solve("malformed.hqp", &out);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("malformed.hqp:6:8:"), "{err}");
    assert!(!out.exists());
}

#[test]
fn empty_hard_level_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sol.txt");
    let res = run_solve("empty_level1.hqp", &out);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_file_and_bad_flags_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sol.txt");
    let res = run_solve("no_such_file.hqp", &out);
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.exists());
    assert_eq!(hqp(&["solve"]).status.code(), Some(1));
    assert_eq!(hqp(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(hqp(&["mpc", "--ordering", "4"]).status.code(), Some(1));
    assert_eq!(hqp(&["bench", "--sigma-grid", "2", "--reps", "1"]).status.code(), Some(1));
}

#[test]
fn objective_stage_runs_when_present() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sol.txt");
    let res = run_solve("objective_2d.hqp", &out);
    assert_eq!(res.status.code(), Some(0));
    let sol = parse_solution(&std::fs::read_to_string(&out).unwrap()).unwrap();
    // Projection of (3, 1) onto {z1 + z2 <= 1, z2 >= 0} is (1, 0).
    let u = sol.u.expect("objective minimizer");
    assert!((u[0] - 1.0).abs() < 1e-6 && u[1].abs() < 1e-6, "{u:?}");
}

#[test]
fn solution_files_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    run_solve("conflict_1d.hqp", &a);
    run_solve("conflict_1d.hqp", &b);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let args = ["bench", "--seed", "3", "--sigma-grid", "0,0.5", "--reps", "2", "--nz", "6", "--p", "3", "--out"];
    let res = hqp(&[&args[..], &[out.to_str().unwrap()]].concat());
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sigma,mean_s,min_s,max_s,mean_iters_cold,mean_iters_warm");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,") || lines[1].starts_with("0.0,"), "{}", lines[1]);

    let res = hqp(&["bench", "--reps", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 1);
}

#[test]
fn mpc_writes_trajectory_and_timing() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("short.toml");
    let toml = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/three_obstacles.toml"))
        .unwrap()
        .replace("duration = 20.0", "duration = 0.5");
    std::fs::write(&scenario, toml).unwrap();
    let traj = dir.path().join("traj.csv");
    let timing = dir.path().join("timing.csv");
    let res = hqp(&[
        "mpc",
        scenario.to_str().unwrap(),
        "--ordering",
        "2",
        "--out",
        traj.to_str().unwrap(),
        "--timing",
        timing.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(&traj).unwrap();
    assert!(text.starts_with("t,s,psi,beta,omega,delta_f,solve_time,viol_p1"));
    assert_eq!(text.lines().count(), 51);
    assert_eq!(std::fs::read_to_string(&timing).unwrap().lines().count(), 51);

    std::fs::write(&scenario, "duration = -1.0\n").unwrap();
    assert_eq!(hqp(&["mpc", scenario.to_str().unwrap()]).status.code(), Some(1));
}
