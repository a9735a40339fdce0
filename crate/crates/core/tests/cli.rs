mod common;

use std::process::{Command, Output};

use common::fixture;

fn visreason(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_visreason")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_then_replay_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let dataset = fixture("batch10/dataset.jsonl");
    let config = fixture("batch10/config.toml");
    let o = visreason(&[
        "run",
        "--dataset",
        dataset.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--concurrency",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("overall              10      80.0"));

    let traj = out.join("trajectories.jsonl");
    let o = visreason(&["replay", "--trajectories", traj.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));

    let o = visreason(&["eval", "--trajectories", traj.to_str().unwrap(), "--metric", "consensus"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("metric: consensus"));

    // A report that no longer matches makes replay fail at runtime.
    let report = out.join("report.json");
    let text = std::fs::read_to_string(&report).unwrap().replace("\"unresolved\": 1", "\"unresolved\": 2");
    std::fs::write(&report, text).unwrap();
    let o = visreason(&["replay", "--trajectories", traj.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn max_reflections_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = visreason(&[
        "run",
        "--dataset",
        fixture("batch10/dataset.jsonl").to_str().unwrap(),
        "--config",
        fixture("batch10/config.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--max-reflections",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    // Without a retry the reflection case study no longer passes.
    assert!(stdout(&o).contains("overall              10      70.0"));
}

#[test]
fn curate_writes_training_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cur");
    let o = visreason(&[
        "curate",
        "--kind",
        "analysis",
        "--dataset",
        fixture("curation/items.jsonl").to_str().unwrap(),
        "--config",
        fixture("curation/analysis.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("retained: 1"));
    let training = std::fs::read_to_string(out.join("training.jsonl")).unwrap();
    assert_eq!(training.lines().count(), 1);

    let captions = dir.path().join("cap");
    let o = visreason(&[
        "curate",
        "--kind",
        "caption",
        "--analysis",
        out.join("retained.jsonl").to_str().unwrap(),
        "--image-root",
        fixture("curation").to_str().unwrap(),
        "--config",
        fixture("curation/caption.toml").to_str().unwrap(),
        "--out",
        captions.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("retained: 1"));

    let o = visreason(&[
        "curate",
        "--kind",
        "caption",
        "--dataset",
        fixture("curation/items.jsonl").to_str().unwrap(),
        "--config",
        fixture("curation/caption.toml").to_str().unwrap(),
        "--out",
        captions.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exit_codes_for_usage_errors() {
    assert_eq!(visreason(&[]).status.code(), Some(1));
    assert_eq!(visreason(&["--help"]).status.code(), Some(0));
    assert_eq!(visreason(&["--version"]).status.code(), Some(0));
    assert_eq!(visreason(&["run", "--dataset", "x"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let o = visreason(&[
        "run",
        "--dataset",
        "/nonexistent/data.jsonl",
        "--config",
        fixture("batch10/config.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/data.jsonl"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[thresholds]\ntau = 2.0\n").unwrap();
    let o = visreason(&[
        "run",
        "--dataset",
        fixture("batch10/dataset.jsonl").to_str().unwrap(),
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unreadable_trajectories_are_runtime_failures() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    std::fs::write(&path, "{\"format\":\"visreason-trajectories\",\"version\":9,\"metric\":\"exact\",\"config_fingerprint\":\"x\"}\n").unwrap();
    let o = visreason(&["eval", "--trajectories", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("version 9"));
}
