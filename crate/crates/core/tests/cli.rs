use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_calderon-lab");

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn tiny_grid_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\nn_axis = 2\n");
    let out = run(&["forward", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_axis"));
}

#[test]
fn unknown_key_and_missing_seed_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\nresolution = 9\n");
    assert_eq!(run(&["probe", "--config", &cfg]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "n_axis = 9\n");
    assert_eq!(run(&["probe", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(run(&["probe"]).status.code(), Some(2));
    assert_eq!(run(&["nonsense", "--seed", "1"]).status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["selftest", "--seed", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("selftest.csv")).unwrap();
    assert!(csv.starts_with("# calderon-lab "));
    assert!(!csv.contains(",false"));
}

#[test]
fn probe_rows_are_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 9\nn_axis = 9\nnoise = 1e-3\ntaus = [2.0, 3.0]\nkappas = [[0.0, 0.5, 0.2], [0.1, -0.4, 0.3]]\n",
    );
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let out_dir = dir.path().join(format!("w{workers}"));
        let out = run(&["probe", "--config", &cfg, "--workers", workers, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(out_dir.join("probe_estimates.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let seeded = dir.path().join("s");
    run(&["probe", "--config", &cfg, "--seed", "10", "--out", seeded.to_str().unwrap()]);
    assert_ne!(std::fs::read(seeded.join("probe_estimates.csv")).unwrap(), outputs[0]);
}

#[test]
fn conductivity_reports_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["conductivity", "--seed", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("conductivity.csv")).unwrap();
    let header = csv.lines().nth(1).unwrap();
    assert!(header.contains("relation_defect") && header.contains("recovery_error"));
}
