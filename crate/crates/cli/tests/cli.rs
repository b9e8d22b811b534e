use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn twoscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoscale")).args(args).output().expect("binary runs")
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name).display().to_string()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("twoscale-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn parse_errors_exit_2() {
    let dir = scratch("bad");
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "[run\nid=").unwrap();
    let out = twoscale(&["run", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let tcp = scenario("tcp_multipath.toml");
    for set in ["tcp.pathz=3", "nope.x=1", "tcp.paths"] {
        let out = twoscale(&["validate", "--scenario", &tcp, "--set", set]);
        assert_eq!(out.status.code(), Some(2), "{set}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(twoscale(&["reproduce", "nope"]).status.code(), Some(2));
    assert_eq!(twoscale(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn zero_horizon_writes_header_only() {
    let dir = scratch("zero");
    let out = twoscale(&[
        "run",
        "--scenario",
        &scenario("icn_line.toml"),
        "--out",
        dir.to_str().unwrap(),
        "--set",
        "run.horizon=0",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert_eq!(csv, "run_id,t,metric,subject,value\n");
}

#[test]
fn run_is_reproducible_and_seed_overrides() {
    let tcp = scenario("tcp_fixed_fec.toml");
    let read = |dir: &Path| std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let mut csvs = Vec::new();
    for (tag, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let dir = scratch(tag);
        let args = ["run", "--scenario", &tcp, "--out", dir.to_str().unwrap(), "--seed", seed, "--set", "run.horizon=2000"];
        assert!(twoscale(&args).status.success());
        assert!(dir.join("summary.csv").exists());
        csvs.push(read(&dir));
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_ne!(csvs[0], csvs[2]);
}

#[test]
fn sweep_writes_one_run_per_value() {
    let dir = scratch("sweep");
    let out = twoscale(&[
        "sweep",
        "--scenario",
        &scenario("tcp_multipath.toml"),
        "--key",
        "tcp.paths",
        "--values",
        "1,2,4",
        "--parallel",
        "2",
        "--out",
        dir.to_str().unwrap(),
        "--set",
        "run.horizon=500",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("run_id,t,metric,subject,value\n"));
    for v in ["1", "2", "4"] {
        assert!(summary.contains(&format!("tcp.paths={v}")), "{summary}");
    }
}

#[test]
fn oracle_and_reproduce() {
    let dir = scratch("oracle");
    let out = twoscale(&["oracle", "--scenario", &scenario("mobility_exp1.toml"), "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(dir.join("oracle.csv")).unwrap().lines().count() > 1);
    let out = twoscale(&["reproduce", "tcp-analytic"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("criterion 10: PASS"));
}
