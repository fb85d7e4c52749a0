use std::path::Path;
use std::process::{Command, Output};

use layermig::calibration::Calibration;
use layermig::migrator::MigrationReport;
use layermig::migrator::Stage;

fn layermig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layermig"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

const FACE_FOUND: &str = r#"{
  "guest": "container",
  "profile": "Face Detection",
  "mode": "three_layer",
  "destination": {"has_base": true, "has_app": true, "has_stale_instance": false},
  "scale": 0.02,
  "seed": 4
}"#;

#[test]
fn run_writes_a_report_with_six_stages_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.json");
    std::fs::write(&cfg, FACE_FOUND).unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = layermig(&["run", "--scenario", path(&cfg), "--out", path(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let r: MigrationReport = serde_json::from_slice(&ta).unwrap();
    assert_eq!(r.stages.len(), 6);
    assert_eq!(r.stages[0].stage, Stage::CloneAppAsInstance);
}

#[test]
fn global_seed_overrides_the_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.json");
    std::fs::write(&cfg, FACE_FOUND).unwrap();
    let o = layermig(&["--seed", "11", "run", "--scenario", path(&cfg)]);
    assert!(o.status.success());
    let r: MigrationReport = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r.scenario.seed, 11);
}

#[test]
fn malformed_and_unknown_fields_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    let o = layermig(&["run", "--scenario", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());

    std::fs::write(&cfg, FACE_FOUND.replace("\"seed\"", "\"speed\": 1, \"seed\"")).unwrap();
    assert_eq!(layermig(&["run", "--scenario", path(&cfg)]).status.code(), Some(2));

    let inconsistent = FACE_FOUND.replace("\"has_base\": true", "\"has_base\": false");
    std::fs::write(&cfg, inconsistent).unwrap();
    assert_eq!(layermig(&["run", "--scenario", path(&cfg)]).status.code(), Some(2));

    assert_eq!(layermig(&["sweep", "--param", "cpu", "--values", "1"]).status.code(), Some(2));
}

#[test]
fn missing_calibration_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = layermig(&[
        "--calibration",
        "/nonexistent/cal.json",
        "reproduce",
        "--target",
        "fig4",
        "--out-dir",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(4));
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn sweeps_have_the_documented_columns_and_trends() {
    let o = layermig(&["--scale", "0.1", "sweep", "--param", "ram", "--values", "20,100,200,300"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("param_value,total_time_s,downtime_s,wire_bytes\n"));
    let t: Vec<f64> = csv_rows(&text).iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(t.len(), 4);
    assert!(t.windows(2).all(|w| w[1] >= w[0]), "{t:?}");

    let o = layermig(&["--scale", "0.1", "sweep", "--param", "bandwidth", "--values", "1,2,5,10,20,50,100,1000"]);
    let rows = csv_rows(&String::from_utf8(o.stdout).unwrap());
    let t: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(t.windows(2).all(|w| w[1] <= w[0]), "{t:?}");
    assert_eq!(t[6], t[7]);

    let o = layermig(&["--scale", "0.1", "sweep", "--param", "ram", "--values", "50"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 2);
}

#[test]
fn reproduce_table1_lists_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = layermig(&["reproduce", "--target", "table1", "--out-dir", path(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 30);
    let face = rows
        .iter()
        .find(|r| r[0] == "container" && r[1] == "Face Detection" && r[2] == "two_layer")
        .unwrap();
    assert_eq!(face[4], "52.0");
    assert_eq!(face[7], "363.1");
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["calibration"], "fitted");
}

#[test]
fn reproduce_fig4_uses_legend_names() {
    let dir = tempfile::tempdir().unwrap();
    assert!(layermig(&["reproduce", "--target", "fig4", "--out-dir", path(dir.path())]).status.success());
    let rows = csv_rows(&std::fs::read_to_string(dir.path().join("fig4.csv")).unwrap());
    let labels: std::collections::BTreeSet<&str> = rows.iter().map(|r| r[3].as_str()).collect();
    let legend: std::collections::BTreeSet<&str> = [
        "Clone base as app",
        "rsync app filesystem",
        "Clone app as instance",
        "Suspend instance",
        "rsync instance filesystem",
        "rsync instance in-memory state",
        "Restore instance",
        "Other remaining tasks",
    ]
    .into();
    assert_eq!(labels, legend);
    assert!(rows.iter().all(|r| !r[7].is_empty()), "every stage has a reference value");
}

#[test]
fn reproduce_fig5_with_default_model_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let o = layermig(&["--calibration", "default", "reproduce", "--target", "fig5", "--out-dir", path(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["calibration"], "default");
    assert!(dir.path().join("fig5_ram.csv").exists());
    assert!(dir.path().join("fig5_bandwidth.csv").exists());
}

#[test]
fn calibrate_fits_the_container_stage_data_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let reference = concat!(env!("CARGO_MANIFEST_DIR"), "/../../reference/fig4_lxc_stages.json");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = layermig(&["calibrate", "--reference", reference, "--out", path(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("clone_base_as_app"));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let cal = Calibration::from_json(&std::fs::read_to_string(&a).unwrap()).unwrap();
    let fit = cal.guests.values().next().unwrap().fit.as_ref().unwrap();
    assert_eq!(fit.observations, 40);
    assert!(fit.within_30_percent >= 0.8, "{}", fit.within_30_percent);
}

#[test]
fn calibrate_with_no_observations_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, r#"{"observations": []}"#).unwrap();
    let o = layermig(&["calibrate", "--reference", path(&empty), "--out", path(&dir.path().join("o.json"))]);
    assert_eq!(o.status.code(), Some(5));
    assert!(!o.stderr.is_empty());
}
