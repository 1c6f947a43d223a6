use std::fs;
use std::process::Command;

use fvbem::adapt::StopCriteria;
use fvbem::cli::{fit_slope, run, sweep_convection, GridSpec, ProblemSource, RunConfig};
use fvbem::model::Example;

fn small(example: Example, dir: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::new(example, dir);
    cfg.stop = StopCriteria { max_elements: 100_000, max_steps: 3 };
    cfg
}

#[test]
fn run_writes_history_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Example::Ex1, dir.path());
    cfg.dump_mesh = true;
    cfg.dump_indicators = true;
    let out = run(&cfg).unwrap();
    let csv = fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "step,N,m,eta,eta_up,E_h,eff_index,seconds");
    assert_eq!(csv.lines().count(), 4);
    for k in 0..3 {
        let mesh = fs::read_to_string(dir.path().join(format!("mesh_{k:03}.txt"))).unwrap();
        let parsed = fvbem::Mesh::from_dump(&mesh).unwrap();
        assert_eq!(parsed.n_triangles(), out.history.steps[k].n_elements);
        let ind = fs::read_to_string(dir.path().join(format!("indicators_{k:03}.txt"))).unwrap();
        assert_eq!(ind.lines().count(), parsed.n_triangles());
        assert!(dir.path().join(format!("solution_{k:03}.txt")).exists());
    }
    assert!(!dir.path().join("exterior.txt").exists());
}

#[test]
fn far_field_run_samples_the_exterior() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Example::Ex3, dir.path());
    cfg.exterior_grid = Some(GridSpec { x: [-0.5, 0.5], y: [-0.5, 0.5], n: 11 });
    run(&cfg).unwrap();
    let text = fs::read_to_string(dir.path().join("exterior.txt")).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect()).collect();
    assert!(!rows.is_empty() && rows.len() < 121);
    for r in &rows {
        assert_eq!(r.len(), 3);
        assert!(r[0].abs() > 0.25 || r[1].abs() > 0.25 || (r[0] > 0.0 && r[1] < 0.0));
        assert!(r[2].is_finite());
    }
}

#[test]
fn reruns_are_identical_apart_from_timing() {
    let strip = |p: &std::path::Path| -> Vec<String> {
        fs::read_to_string(p.join("history.csv")).unwrap().lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&small(Example::Ex2, a.path())).unwrap();
    run(&small(Example::Ex2, b.path())).unwrap();
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn custom_problem_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("problem.cfg");
    fs::write(
        &path,
        "example = custom\ndomain = square\nelements = 32\nalpha = 2\nalpha_rect = -0.25 0 -0.25 0.25 5\nsource = 1\nconvection = 3 0\nradiation = far-field\n",
    )
    .unwrap();
    let mut cfg = small(Example::Ex1, dir.path());
    cfg.problem = ProblemSource::ConfigFile(path);
    let out = run(&cfg).unwrap();
    assert_eq!(out.history.steps[0].n_elements, 32);
    assert!(out.history.steps.iter().all(|r| r.errors.is_none()));
    assert!(dir.path().join("exterior.txt").exists());
}

#[test]
fn sweep_writes_one_history_per_factor() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Example::Ex2, dir.path());
    let runs = sweep_convection(&cfg, &[0.0, 10.0]).unwrap();
    assert_eq!(runs.len(), 2);
    assert!(dir.path().join("history_b0.csv").exists());
    assert!(dir.path().join("history_b10.csv").exists());
    assert!(sweep_convection(&small(Example::Ex1, dir.path()), &[10.0]).is_err());
}

#[test]
fn slope_needs_enough_points() {
    assert!(fit_slope(&[1.0, 2.0], &[1.0, 0.5], 3).is_none());
    assert!((fit_slope(&[1.0, 2.0, 4.0], &[1.0, 0.5, 0.25], 3).unwrap() + 1.0).abs() < 1e-14);
}

#[test]
fn binary_reports_errors_with_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_fvbem");
    let dir = tempfile::tempdir().unwrap();
    let ok = Command::new(exe)
        .args(["--example", "ex3", "--theta", "0.5", "--max-steps", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("step,N,m,eta"));
    let bad = Command::new(exe).args(["--example", "ex9"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let bad = Command::new(exe).args(["--theta", "1.5", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
