use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chunkcount::config_io::{read_reports, save_scenario, save_scene};
use chunkcount::simulator::street::{self, straddle_traffic, TrafficOptions};
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_chunkcount"));
    cmd.env_remove("CHUNKCOUNT_WORKERS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn repo_data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

struct Fixture {
    dir: TempDir,
    frames: u64,
}

impl Fixture {
    /// A scene plus a straddle scenario for four chunks, rendered to
    /// detections.
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let opts = TrafficOptions {
            vehicles: (10, 10),
            frames: (400, 400),
            ..TrafficOptions::default()
        };
        let (spec, _) = straddle_traffic(21, 4, &opts);
        save_scene(dir.path().join("scene.json"), &street::scene()).unwrap();
        save_scenario(dir.path().join("scenario.json"), &spec).unwrap();
        let f = Fixture {
            dir,
            frames: spec.total_frames,
        };
        let o = run(&[
            "simulate",
            "--scenario",
            &f.path("scenario.json"),
            "--scene",
            &f.path("scene.json"),
            "--out",
            &f.path("dets.jsonl"),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        f
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    fn count(&self, extra: &[&str]) -> (u64, String) {
        let frames = self.frames.to_string();
        let dets = self.path("dets.jsonl");
        let scene = self.path("scene.json");
        let mut args = extra.to_vec();
        args.extend([
            "--detections",
            &dets,
            "--scene",
            &scene,
            "--total-frames",
            &frames,
        ]);
        let o = run(&args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        let line = stdout(&o);
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        (v["total"].as_u64().unwrap(), line)
    }
}

#[test]
fn simulate_prints_truth_and_is_repeatable() {
    let f = Fixture::new();
    let args = |out: &str| {
        vec![
            "simulate".to_string(),
            "--scenario".into(),
            f.path("scenario.json"),
            "--scene".into(),
            f.path("scene.json"),
            "--out".into(),
            f.path(out),
            "--seed".into(),
            "77".into(),
        ]
    };
    let a = bin().args(args("a.jsonl")).output().unwrap();
    let b = bin().args(args("b.jsonl")).output().unwrap();
    assert!(a.status.success());
    let text = stdout(&a);
    assert!(
        text.starts_with("truth: ") && text.lines().count() == 1,
        "{text}"
    );
    assert_eq!(text, stdout(&b));
    assert_eq!(
        std::fs::read(f.path("a.jsonl")).unwrap(),
        std::fs::read(f.path("b.jsonl")).unwrap()
    );
}

#[test]
fn chunked_matches_oracle_and_naive_inflates() {
    let f = Fixture::new();
    let (oracle, _) = f.count(&["oracle"]);
    let (one, _) = f.count(&["run", "--chunks", "1", "--workers", "1"]);
    let (four, _) = f.count(&["run", "--chunks", "4", "--workers", "2"]);
    let (naive, _) = f.count(&["run", "--chunks", "4", "--no-dedup"]);
    assert_eq!(one, oracle);
    assert_eq!(four, oracle);
    assert!(naive > oracle, "naive {naive} oracle {oracle}");

    // The oracle matches the printed ground truth.
    let o = run(&[
        "simulate",
        "--scenario",
        &f.path("scenario.json"),
        "--scene",
        &f.path("scene.json"),
        "--out",
        &f.path("again.jsonl"),
    ]);
    assert_eq!(stdout(&o), format!("truth: {oracle}\n"));
}

#[test]
fn oracle_output_is_deterministic_apart_from_identity_fields() {
    let f = Fixture::new();
    let strip = |line: &str| {
        let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
        let m = v.as_object_mut().unwrap();
        for k in ["run_id", "timestamp", "wall_time_ms"] {
            m.remove(k);
        }
        v
    };
    let (_, a) = f.count(&["oracle"]);
    let (_, b) = f.count(&["oracle"]);
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn workers_from_environment() {
    let f = Fixture::new();
    let frames = f.frames.to_string();
    let o = bin()
        .args([
            "run",
            "--detections",
            &f.path("dets.jsonl"),
            "--scene",
            &f.path("scene.json"),
            "--total-frames",
            &frames,
        ])
        .env("CHUNKCOUNT_WORKERS", "3")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["chunks"], 3);

    let o = bin()
        .args([
            "run",
            "--detections",
            &f.path("dets.jsonl"),
            "--scene",
            &f.path("scene.json"),
        ])
        .env("CHUNKCOUNT_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn empty_detections_count_zero() {
    let f = Fixture::new();
    std::fs::write(f.path("empty.jsonl"), "").unwrap();
    let o = run(&[
        "oracle",
        "--detections",
        &f.path("empty.jsonl"),
        "--scene",
        &f.path("scene.json"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["total"], 0);
}

#[test]
fn compare_exit_codes() {
    let f = Fixture::new();
    let store = f.path("store.jsonl");
    f.count(&["oracle", "--store", &store]);
    f.count(&["run", "--chunks", "4", "--store", &store]);
    f.count(&["run", "--chunks", "4", "--no-dedup", "--store", &store]);
    let ids: Vec<String> = read_reports(&store)
        .unwrap()
        .into_iter()
        .map(|r| r.run_id)
        .collect();
    assert_eq!(ids.len(), 3);

    let at = |i: usize| format!("{store}#{}", ids[i]);
    let equal = run(&["compare", "--a", &at(0), "--b", &at(1)]);
    assert_eq!(equal.status.code(), Some(0), "{}", stderr(&equal));
    assert!(stdout(&equal).contains("delta=+0"));

    let differ = run(&["compare", "--a", &at(0), "--b", &store]);
    assert_eq!(differ.status.code(), Some(2));
    let table = stdout(&differ);
    assert!(
        table.contains("MISMATCH") && table.contains("[0, "),
        "{table}"
    );
    assert!(stderr(&differ).is_empty());

    let missing = run(&["compare", "--a", &format!("{store}#nope"), "--b", &store]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stdout(&missing).is_empty());
    assert!(stderr(&missing).contains("nope"));
}

#[test]
fn compare_rejects_different_scenes() {
    let f = Fixture::new();
    let store = f.path("store.jsonl");
    f.count(&["oracle", "--store", &store]);
    let mut other = street::scene();
    other.grace_frames = 2;
    save_scene(f.path("other.json"), &other).unwrap();
    let o = run(&[
        "oracle",
        "--detections",
        &f.path("dets.jsonl"),
        "--scene",
        &f.path("other.json"),
    ]);
    std::fs::write(f.path("other_report.json"), &o.stdout).unwrap();
    let o = run(&[
        "compare",
        "--a",
        &store,
        "--b",
        &f.path("other_report.json"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("different scenes"));
}

#[test]
fn validation_errors_exit_one_with_diagnostics_on_stderr() {
    let f = Fixture::new();
    std::fs::write(
        f.path("bad_scene.json"),
        std::fs::read_to_string(f.path("scene.json"))
            .unwrap()
            .replace("\"gate\": 50.0", "\"gate\": -1.0"),
    )
    .unwrap();
    std::fs::write(f.path("bad.jsonl"), "{\"frame\":0}\n").unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec![
            "validate-config".into(),
            "--scene".into(),
            f.path("bad_scene.json"),
        ],
        vec![
            "oracle".into(),
            "--detections".into(),
            f.path("bad.jsonl"),
            "--scene".into(),
            f.path("scene.json"),
        ],
        vec![
            "run".into(),
            "--detections".into(),
            f.path("dets.jsonl"),
            "--scene".into(),
            f.path("scene.json"),
            "--chunks".into(),
            "0".into(),
        ],
        vec!["run".into(), "--unknown-flag".into()],
    ];
    for args in cases {
        let o = bin().args(&args).output().unwrap();
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(o.stdout.is_empty(), "{args:?}");
        assert!(!o.stderr.is_empty(), "{args:?}");
    }
    let o = run(&["validate-config", "--scene", &f.path("bad_scene.json")]);
    assert!(stderr(&o).contains("gate"), "{}", stderr(&o));
    let o = run(&[
        "oracle",
        "--detections",
        &f.path("bad.jsonl"),
        "--scene",
        &f.path("scene.json"),
    ]);
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn shipped_sample_files_are_valid() {
    let o = run(&[
        "validate-config",
        "--scene",
        repo_data("scene.json").to_str().unwrap(),
        "--scenario",
        repo_data("scenario.json").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&[
        "validate-config",
        "--scenario",
        repo_data("straddle.json").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}
