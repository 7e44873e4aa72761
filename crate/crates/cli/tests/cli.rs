use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use circpack::fixtures::{reference_raw, LAYOUTS, REFERENCE_RADIUS};
use circpack::io::{InstanceFile, SolutionFile};
use circpack::Placement;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_circpack"));
    c.env_remove("CIRCPACK_TIME_SCALE");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn reference_file(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("reference.txt");
    let f = InstanceFile {
        radius: REFERENCE_RADIUS,
        rects: reference_raw(),
    };
    fs::write(&path, f.render()).unwrap();
    path
}

fn solution_file(dir: &TempDir, name: &str, mode: &str, rotate: bool, placements: Vec<Placement>) -> PathBuf {
    let path = dir.path().join(name);
    let v = serde_json::json!({
        "objective_mode": mode,
        "objective_value": 0.0,
        "placements": placements,
        "verified": false,
        "max_violation": 0.0,
        "replication_found": null,
        "total_time_s": null,
        "solver_config": {"rotate": rotate},
    });
    fs::write(&path, v.to_string()).unwrap();
    path
}

#[test]
fn layouts_verify() {
    let dir = TempDir::new().unwrap();
    let inst = reference_file(&dir);
    for (k, known) in LAYOUTS.iter().enumerate() {
        let sol = solution_file(&dir, &format!("known{k}.json"), &known.objective.to_string(), known.rotate, known.placements());
        let o = run(&["verify", p(&inst), p(&sol)]);
        assert_eq!(code(&o), 0, "{}: {}", known.name, String::from_utf8_lossy(&o.stdout));
        let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(report["objective_value"].as_f64().unwrap(), known.value);
    }
}

#[test]
fn duplicated_rectangle_is_infeasible() {
    let dir = TempDir::new().unwrap();
    let inst = reference_file(&dir);
    let mut placements = LAYOUTS[0].placements();
    placements.push(placements[0]);
    let sol = solution_file(&dir, "dup.json", "count", false, placements);
    assert_eq!(code(&run(&["verify", p(&inst), p(&sol)])), 1);
}

#[test]
fn unknown_id_is_structural() {
    let dir = TempDir::new().unwrap();
    let inst = reference_file(&dir);
    let sol = solution_file(&dir, "bad.json", "count", false, vec![Placement::new(99, 0.0, 0.0)]);
    let o = run(&["verify", p(&inst), p(&sol)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("99"));
}

#[test]
fn parse_error_reports_line() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("broken.txt");
    fs::write(&path, "# header next\n2 3.0\n1 1\n1 oops\n").unwrap();
    let o = run(&["solve", p(&path)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
}

#[test]
fn rotate_and_squares_conflict() {
    let dir = TempDir::new().unwrap();
    let inst = reference_file(&dir);
    assert_eq!(code(&run(&["solve", p(&inst), "--rotate", "--squares"])), 2);
}

#[test]
fn generate_is_deterministic() {
    let a = run(&["generate", "-n", "6", "--seed", "5", "--fraction", "0.3333"]);
    let b = run(&["generate", "-n", "6", "--seed", "5", "--fraction", "0.3333"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let f = InstanceFile::parse(&String::from_utf8(a.stdout).unwrap()).unwrap();
    assert_eq!(f.rects.len(), 6);
    let sq = run(&["generate", "-n", "4", "--shape", "square"]);
    let f = InstanceFile::parse(&String::from_utf8(sq.stdout).unwrap()).unwrap();
    assert!(f.rects.iter().all(|r| r.length == r.width));
}

#[test]
fn empty_instance_solves_to_zero() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("empty.txt");
    fs::write(&inst, "0 2.0\n").unwrap();
    let svg = dir.path().join("empty.svg");
    let o = run(&["solve", p(&inst), "--svg", p(&svg), "--deterministic"]);
    assert_eq!(code(&o), 0);
    let sol: SolutionFile = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(sol.objective_value, 0.0);
    assert!(sol.placements.is_empty());
    let drawing = fs::read_to_string(&svg).unwrap();
    assert_eq!(drawing.matches("<circle").count(), 1);
    assert!(!drawing.contains("<rect"));
}

#[test]
fn solved_output_verifies_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("small.txt");
    fs::write(&inst, "3 1.6\n1 1\n1.2 0.8\n0.9 1.3\n").unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = run(&[
            "solve",
            p(&inst),
            "--objective",
            "area",
            "--rotate",
            "--replications",
            "2",
            "--seed",
            "7",
            "--deterministic",
            "--json",
            p(out),
        ]);
        assert_eq!(code(&o), 0);
    }
    let (ja, jb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(ja, jb);
    let sol: SolutionFile = serde_json::from_slice(&ja).unwrap();
    assert!(sol.verified && sol.objective_value > 0.0);
    assert_eq!(sol.total_time_s, None);
    assert_eq!(code(&run(&["verify", p(&inst), p(&a)])), 0);
}

#[test]
fn time_scale_env_overrides_flag() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("one.txt");
    fs::write(&inst, "1 2\n1 1\n").unwrap();
    let o = bin()
        .args(["solve", p(&inst), "--replications", "1", "--time-scale", "3"])
        .env("CIRCPACK_TIME_SCALE", "0.25")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let sol: SolutionFile = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(sol.solver_config["fss"]["time_scale"], 0.25);
    assert!(sol.total_time_s.is_some());
}

#[test]
fn oracle_two_unit_squares() {
    let dir = TempDir::new().unwrap();
    let inst = dir.path().join("sq.txt");
    fs::write(&inst, format!("2 {}\n1 1\n1 1\n", 1.25f64.sqrt())).unwrap();
    let o = run(&["oracle", p(&inst)]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["value"], 2.0);
    assert_eq!(v["status"], "heuristic-complete");

    let tight = dir.path().join("tight.txt");
    fs::write(&tight, "2 0.9\n1 1\n1 1\n").unwrap();
    let v: serde_json::Value = serde_json::from_slice(&run(&["oracle", p(&tight)]).stdout).unwrap();
    assert_eq!(v["value"], 1.0);
}

#[test]
fn oracle_refuses_large_instances() {
    let dir = TempDir::new().unwrap();
    let inst = reference_file(&dir);
    assert_eq!(code(&run(&["oracle", p(&inst)])), 2);
}
