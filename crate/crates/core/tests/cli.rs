//! End-to-end runs of the `roadmark` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn roadmark(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roadmark"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_run_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    let out = dir.path().join("out");

    let o = roadmark(&[
        "synth",
        "--profile",
        "test_track",
        "--frames",
        "2",
        "--seed",
        "5",
        "--out",
        path(&scenes),
    ]);
    assert!(o.status.success(), "{o:?}");
    let cloud = scenes.join("test_track_0001.cloud");
    let truth = scenes.join("test_track_0001.truth");
    assert!(cloud.exists() && truth.exists());

    let o = roadmark(&[
        "run",
        path(&cloud),
        "--truth",
        path(&truth),
        "--out",
        path(&out),
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{o:?}");
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["frame_id"], "test_track_0001");
    assert!(report["accepted_lines"].as_u64().unwrap() >= 2);
    assert!(report["score"]["precision"].as_f64().unwrap() > 0.9);
    for stage in [
        "prefilter_ms",
        "plane_ms",
        "region_ms",
        "threshold_ms",
        "lines_ms",
        "total_ms",
    ] {
        assert!(report["timings"][stage].as_f64().is_some(), "{stage}");
    }

    let labels = out.join("test_track_0001.labels");
    let lines = fs::read_to_string(out.join("test_track_0001.lines")).unwrap();
    assert!(lines.starts_with("# anchor_x"));
    assert_eq!(fs::read_to_string(&labels).unwrap().lines().count(), 64 * 1024);

    let o = roadmark(&["eval", path(&labels), path(&truth)]);
    assert!(o.status.success(), "{o:?}");
    let eval: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(eval["precision"], report["score"]["precision"]);
    assert_eq!(eval["recall"], report["score"]["recall"]);
}

#[test]
fn batch_over_directory_and_suite_agree() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("highway");
    let o = roadmark(&[
        "synth",
        "--profile",
        "highway",
        "--frames",
        "2",
        "--out",
        path(&scenes),
        "--layout",
        "text",
    ]);
    assert!(o.status.success(), "{o:?}");

    let out = dir.path().join("report");
    let from_dir = roadmark(&["batch", path(&scenes), "--out", path(&out), "--workers", "1"]);
    assert!(from_dir.status.success(), "{from_dir:?}");
    assert!(out.join("batch.json").exists());
    assert_eq!(fs::read_to_string(out.join("summary.tsv")).unwrap(), stdout(&from_dir));

    let from_suite = roadmark(&["batch", "--profile", "highway", "--frames", "2"]);
    assert!(from_suite.status.success(), "{from_suite:?}");
    // Same frames, same dataset name, same scores.
    assert_eq!(stdout(&from_dir), stdout(&from_suite));
    assert!(stdout(&from_suite).starts_with("dataset\tchannel\tprecision\trecall\tf1\nhighway\treflectivity\t"));
}

#[test]
fn compare_channels_prints_both_rows() {
    let o = roadmark(&["compare-channels", "--profile", "test_track", "--frames", "1"]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3, "{text}");
    assert!(rows[1].starts_with("test_track\treflectivity\t"));
    assert!(rows[2].starts_with("test_track\tintensity\t"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // Usage errors.
    assert_eq!(roadmark(&["batch", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(roadmark(&["batch"]).status.code(), Some(1));
    assert_eq!(
        roadmark(&["run", "x.cloud", "--channel", "sonar"]).status.code(),
        Some(1)
    );
    assert_eq!(roadmark(&["batch", path(dir.path())]).status.code(), Some(1));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[ground]\nth_plan = 0.3\n").unwrap();
    let o = roadmark(&["batch", "--profile", "highway", "--frames", "1", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("th_plan"));

    // Data errors.
    let junk = dir.path().join("junk.cloud");
    fs::write(&junk, "FIELDS x y\nCOUNT 1\n").unwrap();
    assert_eq!(roadmark(&["run", path(&junk)]).status.code(), Some(2));
    assert_eq!(
        roadmark(&["run", path(&dir.path().join("missing.cloud"))])
            .status
            .code(),
        Some(2)
    );
    let a = dir.path().join("a.labels");
    let b = dir.path().join("b.labels");
    fs::write(&a, "road\nmarking\n").unwrap();
    fs::write(&b, "road\n").unwrap();
    assert_eq!(roadmark(&["eval", path(&a), path(&b)]).status.code(), Some(2));
    fs::write(&b, "road\npaint\n").unwrap();
    assert_eq!(roadmark(&["eval", path(&a), path(&b)]).status.code(), Some(2));

    assert_eq!(roadmark(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.toml");
    // A line gate no stripe can pass leaves nothing labelled.
    fs::write(&cfg, "[lines]\nmin_support = 100000\n").unwrap();
    let o = roadmark(&[
        "batch",
        "--profile",
        "test_track",
        "--frames",
        "1",
        "--config",
        path(&cfg),
    ]);
    assert!(o.status.success(), "{o:?}");
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    let cells: Vec<&str> = row.split('\t').collect();
    assert_eq!(cells[2], "-", "{row}");
    assert_eq!(cells[3], "0.00", "{row}");
}
