use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sircap::runner::{run_from_args, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE};

fn scenario(cap: f64, tau: f64) -> Value {
    json!({
        "gamma": 0.1, "sigma_s": 0.8, "sigma_f": 1.5, "horizon_T": 365, "tau": tau,
        "cap_K": cap, "x0": 0.999999, "y0": 0.000001
    })
}

fn write(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string(value).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> i32 {
    run_from_args(std::iter::once("sircap").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &scenario(0.03, 40.0));
    let out = dir.path().join("solve");
    assert_eq!(run(&["solve", "--config", s(&cfg), "--out", s(&out)]), EXIT_OK);

    let policy = read_json(&out.join("policy.json"));
    assert_eq!(policy["case"], "2.1");
    assert_eq!(policy["verified"], true);
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next().unwrap(), "t,x,y,v,sigma");
    assert!(out.join("metadata.json").exists());

    let check = dir.path().join("pmp");
    let code = run(&["verify-pmp", "--config", s(&cfg), "--out", s(&check), "--policy", s(&out.join("policy.json"))]);
    assert_eq!(code, EXIT_OK);
    let report = read_json(&check.join("pmp_report.json"));
    assert_eq!(report["passed"], true);
    assert_eq!(report["case"], "2.1");
}

#[test]
fn unconstrained_policy_has_no_arc_note() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &scenario(0.06, 80.0));
    let out = dir.path().join("o");
    assert_eq!(run(&["solve", "--config", s(&cfg), "--out", s(&out)]), EXIT_OK);
    let code = run(&["verify-pmp", "--config", s(&cfg), "--out", s(&out), "--policy", s(&out.join("policy.json"))]);
    assert_eq!(code, EXIT_OK);
    let notes = read_json(&out.join("pmp_report.json"))["notes"].clone();
    assert!(notes.as_array().unwrap().iter().any(|n| n == "no boundary arc"), "{notes}");
}

#[test]
fn step_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &scenario(0.06, 80.0));
    let out = dir.path().join("o");
    assert_eq!(run(&["solve", "--config", s(&cfg), "--out", s(&out), "--step", "0.05"]), EXIT_OK);
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let second: f64 = traj.lines().nth(2).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(second <= 0.05 + 1e-12 && second > 0.04, "first step {second}");
}

#[test]
fn malformed_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let out = dir.path().join("never");
    assert_eq!(run(&["solve", "--config", s(&bad), "--out", s(&out)]), EXIT_USAGE);
    assert!(!out.exists());

    let mut extra = scenario(0.03, 40.0);
    extra["colour"] = json!("blue");
    let cfg = write(dir.path(), "extra.json", &extra);
    assert_eq!(run(&["solve", "--config", s(&cfg), "--out", s(&out)]), EXIT_USAGE);
    assert!(!out.exists());

    let cfg = write(dir.path(), "neg.json", &scenario(0.03, -1.0));
    assert_eq!(run(&["solve", "--config", s(&cfg), "--out", s(&out)]), EXIT_USAGE);
    assert!(!out.exists());
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &scenario(0.03, 40.0));
    let out = dir.path().join("o");
    assert_eq!(run(&["solve"]), EXIT_USAGE);
    assert_eq!(run(&["frobnicate", "--config", s(&cfg)]), EXIT_USAGE);
    assert_eq!(run(&["solve", "--config", s(&cfg), "--out", s(&out), "--workers", "0"]), EXIT_USAGE);
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["verify-pmp", "--config", s(&cfg), "--out", s(&out), "--policy", s(&missing)]), EXIT_USAGE);
    assert!(!out.exists());
}

#[test]
fn infeasible_cap_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &scenario(5e-7, 40.0));
    let out = dir.path().join("o");
    assert_eq!(run(&["solve", "--config", s(&cfg), "--out", s(&out)]), EXIT_INFEASIBLE);
    let report = read_json(&out.join("infeasibility.json"));
    assert_eq!(report["command"], "solve");
    assert!(!out.join("policy.json").exists());
}

#[test]
fn exhausted_budget_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &scenario(0.03, 20.0));
    let out = dir.path().join("o");
    assert_eq!(run(&["solve", "--config", s(&cfg), "--out", s(&out)]), EXIT_INFEASIBLE);
    assert!(out.join("infeasibility.json").exists());
}

#[test]
fn sweep_records_infeasible_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &scenario(0.03, 40.0));
    let out = dir.path().join("o");
    let code = run(&[
        "sweep-tau", "--config", s(&cfg), "--out", s(&out), "--tau-start", "20", "--tau-end", "30", "--tau-step", "5",
    ]);
    assert_eq!(code, EXIT_OK);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "tau,case,t1,t2,mu,x_inf,oracle_t2,oracle_mu,pmp_ok");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("20,error,"), "{}", lines[1]);
    assert!(lines[3].starts_with("30,2.1,"), "{}", lines[3]);
    let errors = read_json(&out.join("boundaries.json"))["errors"].clone();
    assert_eq!(errors.as_array().unwrap().len(), 1);
}

#[test]
fn empty_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &scenario(0.03, 40.0));
    let out = dir.path().join("o");
    let code = run(&[
        "sweep-tau", "--config", s(&cfg), "--out", s(&out), "--tau-start", "50", "--tau-end", "40", "--tau-step", "1",
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(), 1);
    assert_eq!(read_json(&out.join("boundaries.json"))["boundaries"], json!([]));

    let code = run(&[
        "sweep-tau", "--config", s(&cfg), "--out", s(&out), "--tau-start", "40", "--tau-end", "50", "--tau-step", "0",
    ]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn oracle_surface_has_every_lattice_point() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = scenario(0.06, 80.0);
    cfg["oracle_resolution"] = json!([30, 20]);
    cfg["oracle_refinements"] = json!(1);
    cfg["oracle_refine_resolution"] = json!([10, 10]);
    let cfg = write(dir.path(), "c.json", &cfg);
    let out = dir.path().join("o");
    assert_eq!(run(&["oracle", "--config", s(&cfg), "--out", s(&out)]), EXIT_OK);
    let surface = fs::read_to_string(out.join("surface.csv")).unwrap();
    assert_eq!(surface.lines().next().unwrap(), "t2,mu,x_inf,feasible");
    assert_eq!(surface.lines().count(), 1 + 30 * 20);
    let cmp = read_json(&out.join("comparison.json"));
    assert_eq!(cmp["evaluations"], 30 * 20 + 10 * 10);
    assert_eq!(cmp["case"], "1.2");
}
