use std::process::{Command, Output};

use slipt_core::oracle::OracleResult;
use slipt_core::scenario::{tiny_scenario, Scenario};

fn slipt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slipt")).args(args).output().unwrap()
}

#[test]
fn example_scenario_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.toml");
    assert!(slipt(&["example-scenario", "--tiny", "--out", path.to_str().unwrap()]).status.success());
    assert_eq!(Scenario::load(&path).unwrap(), tiny_scenario());

    let out = slipt(&["example-scenario"]);
    assert!(out.status.success());
    Scenario::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap();
}

#[test]
fn invalid_config_exits_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let mut s = tiny_scenario();
    s.thresholds.qos = -1.0;
    std::fs::write(&path, s.to_toml().unwrap()).unwrap();
    let out = slipt(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let out = slipt(&["train", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn oracle_writes_csv_and_action() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    let mut s = tiny_scenario();
    s.oracle.beam_points = 3;
    s.oracle.split_points = 3;
    std::fs::write(&cfg, s.to_toml().unwrap()).unwrap();
    let out = dir.path().join("out");
    let status = slipt(&["oracle", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status;
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("oracle.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(OracleResult::CSV_HEADER));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..3], &["grid", "rsma", "7"]);
    assert!(row[3].parse::<f64>().unwrap() > 0.0);
    assert!(out.join("best_action.json").exists());
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, tiny_scenario().to_toml().unwrap()).unwrap();
    let out = dir.path().join("run");
    let c = cfg.to_str().unwrap();
    assert!(slipt(&["train", "--config", c, "--episodes", "2", "--out", out.to_str().unwrap()]).status.success());
    let ckpt = out.join("checkpoint.json");
    // the built-in default scenario has six LEDs and four users
    let res = slipt(&["eval", "--checkpoint", ckpt.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let res = slipt(&["eval", "--config", c, "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(res.status.success());
    assert!(String::from_utf8(res.stdout).unwrap().starts_with("scheme,seed,placements,mean_reward"));
}
