use std::path::Path;
use std::process::{Command, Output};

use sti_core::fixtures::{straight_road, cruising_ego};
use sti_core::reach::StiReport;
use sti_core::scene::{save_scene, Scene};

fn sti(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sti")).args(args).output().expect("spawn sti")
}

fn ok(args: &[&str]) -> String {
    let out = sti(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn reports(jsonl: &str) -> Vec<StiReport> {
    jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn cut_in_threat_rises_before_the_merge() {
    let dir = tempfile::tempdir().unwrap();
    let (scene, cfg) = (path(dir.path(), "cutin.json"), path(dir.path(), "cfg.json"));
    std::fs::write(&cfg, r#"{"planner": {"ego_radius": 1.0}}"#).unwrap();
    ok(&["fixture", "cut-in", "--out", &scene]);
    let r = reports(&ok(&["--config", &cfg, "analyze", "--scene", &scene]));
    // the median cut-in starts its merge at 15 m / 11 m/s
    let merge = (15.0f64 / 11.0 / 0.1).ceil() as usize + 15;
    let early: f64 = r[..10].iter().map(|x| x.scene_sti).sum::<f64>() / 10.0;
    let late: f64 = r[merge - 10..merge].iter().map(|x| x.scene_sti).sum::<f64>() / 10.0;
    assert!(late > early + 0.2, "early {early}, late {late}");
}

#[test]
fn actorless_scene_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let scene = Scene {
        dt: 0.1,
        actors: vec![],
        ego: (0..5).map(|t| cruising_ego(t, 0.8 * t as f64, 0.0, 8.0)).collect(),
        lane_map: straight_road(2, 3.7, -10.0, 120.0),
    };
    let file = path(dir.path(), "empty.json");
    save_scene(&scene, &file).unwrap();
    let csv = path(dir.path(), "out.csv");
    let r = reports(&ok(&["analyze", "--scene", &file, "--csv", &csv]));
    assert_eq!(r.len(), 5);
    assert!(r.iter().all(|x| x.scene_sti == 0.0 && x.actors.is_empty()));
    let table = std::fs::read_to_string(csv).unwrap();
    assert!(table.starts_with("t,scene_sti,degenerate\n0,0,false\n"));
}

#[test]
fn missing_scene_is_a_data_error_naming_the_path() {
    let out = sti(&["analyze", "--scene", "/no/such/scene.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/scene.json"));
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(sti(&["analyze"]).status.code(), Some(1));
    assert_eq!(sti(&["frobnicate"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(dir.path(), "bad.json");
    std::fs::write(&cfg, r#"{"bev": {"a": 1000}}"#).unwrap();
    let scene = path(dir.path(), "we.json");
    ok(&["fixture", "worked-example", "--out", &scene]);
    assert_eq!(sti(&["--config", &cfg, "analyze", "--scene", &scene]).status.code(), Some(1));
    assert_eq!(sti(&["--threads", "0", "analyze", "--scene", &scene]).status.code(), Some(1));
}

#[test]
fn rank_orders_worked_example_actors() {
    let dir = tempfile::tempdir().unwrap();
    let scene = path(dir.path(), "we.json");
    ok(&["fixture", "worked-example", "--out", &scene]);
    let table = ok(&["rank", "--scene", &scene, "--t", "0"]);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "rank\tactor\tsti\tt");
    assert!(rows[1].starts_with("1\ttop\t0.666667"));
    assert!(rows[2].starts_with("2\tbottom\t0.083333"));
}

#[test]
fn characterize_nearest_rank() {
    let dir = tempfile::tempdir().unwrap();
    let file = path(dir.path(), "r.jsonl");
    let lines: Vec<String> = (0..100)
        .map(|t| {
            let v = if t < 90 { 0.0 } else { 1.0 };
            serde_json::to_string(&StiReport {
                t,
                scene_sti: v,
                actors: [("a".to_string(), v)].into(),
                ..StiReport::default()
            })
            .unwrap()
        })
        .collect();
    std::fs::write(&file, lines.join("\n") + "\n").unwrap();
    let cdf = path(dir.path(), "cdf.csv");
    let out: serde_json::Value = serde_json::from_str(&ok(&["characterize", &file, "--cdf", &cdf])).unwrap();
    for q in out.as_array().unwrap() {
        let p = &q["percentiles"];
        assert_eq!((p["p50"].as_f64(), p["p90"].as_f64(), p["p99"].as_f64()), (Some(0.0), Some(0.0), Some(1.0)));
        assert_eq!(q["n"], 100);
    }
    let table = std::fs::read_to_string(cdf).unwrap();
    assert!(table.contains("scene-sti,0,0.9\n") && table.contains("scene-sti,1,1\n"));
}

#[test]
fn characterize_rejects_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let file = path(dir.path(), "empty.jsonl");
    std::fs::write(&file, "").unwrap();
    assert_eq!(sti(&["characterize", &file]).status.code(), Some(2));
}

#[test]
fn bench_reports_passes_and_single_repetition() {
    let dir = tempfile::tempdir().unwrap();
    let scene = path(dir.path(), "bench.json");
    ok(&["fixture", "bench", "--out", &scene]);
    let v: serde_json::Value =
        serde_json::from_str(&ok(&["--d-max", "200", "bench", "--scene", &scene, "--repetitions", "1"])).unwrap();
    assert_eq!(v["goals"], 132);
    assert_eq!(v["actors"], 10);
    assert_eq!(v["passes"], 12);
    assert_eq!(v["single_repetition"], true);
    assert_eq!(v["sti_step"]["std_s"], 0.0);
    assert_eq!(v["deterministic"], true);
}

#[test]
fn export_dataset_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let scene = path(dir.path(), "we.json");
    ok(&["fixture", "worked-example", "--out", &scene]);
    let out = path(dir.path(), "ds");
    ok(&["--k", "10", "export-dataset", "--scene", &scene, "--out", &out]);
    let (cfg, samples) = sti_core::bev::read_dataset(&out).unwrap();
    assert_eq!(cfg, sti_core::bev::BevConfig::default());
    assert_eq!(samples.len(), 1);
    assert_eq!(samples[0].frames.len(), 11);
}

#[test]
fn sweep_writes_summary_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "sweep");
    let line = ok(&["sweep", "--policy", "threshold-brake", "--limit", "5", "--sweep-out", &out]);
    assert!(line.starts_with("policy=threshold-brake"), "{line}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"], 5);
    let runs = std::fs::read_to_string(dir.path().join("sweep/runs.jsonl")).unwrap();
    assert_eq!(runs.lines().count(), 5);
}

#[test]
fn realtime_mode_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let scene = path(dir.path(), "cutin.json");
    ok(&["fixture", "cut-in", "--out", &scene]);
    let a = ok(&["analyze", "--scene", &scene, "--mode", "realtime", "--mc-samples", "4", "--seed", "9"]);
    let b = ok(&["analyze", "--scene", &scene, "--mode", "realtime", "--mc-samples", "4", "--seed", "9"]);
    assert_eq!(a, b);
    let first: serde_json::Value = serde_json::from_str(a.lines().next().unwrap()).unwrap();
    assert!(first.get("scene_sti_mean").is_some() && first.get("scene_sti_std").is_some());
}
