use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SCENARIO: &str = r#"{
  "name": "small",
  "topology": {"family": "stratified", "num_layers": 3, "nodes_per_layer": 3},
  "strategy": {"discipline": "poisson_pool", "mean_delay_s": 0.1},
  "clients": {"num_clients": 20},
  "cover": {"origin": "clients", "rate_per_origin_per_s": 0.5},
  "run": {"horizon_s": 30, "warmup_s": 2, "seeds": [1, 2, 3], "metric": "entropy"}
}"#;

fn mixsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sweep_config() -> String {
    format!(r#"{{"base": {SCENARIO}, "axis": {{"path": "clients.num_clients", "values": [40, 10, 20]}}}}"#)
}

#[test]
fn run_writes_one_row_per_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.json", SCENARIO);
    let out = dir.path().join("out.csv");
    let res = mixsim(&["run", "-c", s(&cfg), "-o", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("scenario_id,axis,seed,users,topology,strategy"));
    assert!(lines[1].starts_with("small,,1,20,stratified,poisson_pool,"));
    assert!(String::from_utf8_lossy(&res.stderr).contains("entropy"));
}

#[test]
fn seed_override_replaces_seed_list() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.json", SCENARIO);
    let out = dir.path().join("out.csv");
    let res = mixsim(&["run", "-c", s(&cfg), "-o", s(&out), "--seed-override", "7,9"]);
    assert!(res.status.success());
    let seeds: Vec<String> = fs::read_to_string(&out)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().to_string())
        .collect();
    assert_eq!(seeds, ["7", "9"]);
}

#[test]
fn sweep_output_is_independent_of_thread_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "sweep.json", &sweep_config());
    let mut outputs = Vec::new();
    for (i, parallel) in ["1", "8", "8"].iter().enumerate() {
        let out = dir.path().join(format!("sweep{i}.csv"));
        let res = mixsim(&["sweep", "-c", s(&cfg), "-o", s(&out), "--parallel", parallel]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);

    // rows come out sorted by axis value whatever the config order
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    let axes: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(axes, ["10", "10", "10", "20", "20", "20", "40", "40", "40"]);
}

#[test]
fn search_prints_knob_value() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "search.json",
        &format!(r#"{{"base": {SCENARIO}, "knob": "mean_delay", "lo": 0.01, "hi": 2.0, "objective_bits": 3.0}}"#),
    );
    let out = dir.path().join("probes.csv");
    let res = mixsim(&["search", "-c", s(&cfg), "-o", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.starts_with("strategy.mean_delay_s = "), "{stdout}");
    assert!(fs::read_to_string(&out).unwrap().lines().count() > 1);
}

#[test]
fn configuration_problems_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out.csv");

    let unknown = write(&dir, "unknown.json", &SCENARIO.replace("\"name\"", "\"nmae\""));
    let res = mixsim(&["run", "-c", s(&unknown), "-o", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nmae"));

    let invalid = write(
        &dir,
        "invalid.json",
        &SCENARIO.replace("\"horizon_s\": 30", "\"horizon_s\": -1"),
    );
    assert_eq!(
        mixsim(&["run", "-c", s(&invalid), "-o", s(&out)]).status.code(),
        Some(1)
    );

    let missing = dir.path().join("absent.json");
    assert_eq!(
        mixsim(&["run", "-c", s(&missing), "-o", s(&out)]).status.code(),
        Some(1)
    );

    assert_eq!(mixsim(&["run", "--bogus"]).status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn failed_sweep_point_exits_with_one_after_writing_the_rest() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "sweep.json",
        &format!(r#"{{"base": {SCENARIO}, "axis": {{"path": "clients.num_clients", "values": [20, 1]}}}}"#),
    );
    let out = dir.path().join("out.csv");
    let res = mixsim(&["sweep", "-c", s(&cfg), "-o", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 4);
}

#[test]
fn unwritable_output_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.json", SCENARIO);
    let res = mixsim(&["run", "-c", s(&cfg), "-o", s(dir.path())]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn help_exits_cleanly() {
    let res = mixsim(&["--help"]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stdout).contains("sweep"));
}
