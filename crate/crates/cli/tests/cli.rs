use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn origami(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_origami")).args(args).output().unwrap()
}

fn summary(out: &Output) -> Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().last().unwrap_or_else(|| panic!("no stdout; stderr: {}", String::from_utf8_lossy(&out.stderr)));
    serde_json::from_str(line).unwrap()
}

fn arg(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn validate_accepts_a_bundled_fixture() {
    let out = origami(&["validate", "fixture:three_arm"]);
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["command"], "validate");
    assert_eq!(s["status"], "ok");
    assert_eq!(s["panels"], 4);
}

#[test]
fn validate_rejects_a_broken_design_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    let text = r#"{"version":1,"name":"broken",
        "keypoints":[{"id":0,"pos":[0,0,0],"dof":[true,true,true],"actuation":null},
                     {"id":1,"pos":[1,0,0],"dof":[true,true,true],"actuation":null}],
        "edges":[{"a":0,"b":1,"kind":"crease"},{"a":1,"b":0,"kind":"crease"}],
        "panels":[]}"#;
    std::fs::write(&path, text).unwrap();
    let out = origami(&["validate", arg(&path)]);
    assert_eq!(out.status.code(), Some(1));
    let s = summary(&out);
    assert_eq!(s["status"], "error");
    assert_eq!(s["error"]["code"], "InvalidPattern");
    assert!(String::from_utf8_lossy(&out.stderr).contains("DuplicateEdge"));
}

#[test]
fn unknown_fixture_and_bad_flags_exit_with_distinct_codes() {
    assert_eq!(origami(&["validate", "fixture:nope"]).status.code(), Some(1));
    assert_eq!(origami(&["sweep", "--grid", "0x4", "--out", "x.csv"]).status.code(), Some(2));
    assert_eq!(origami(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(origami(&["--help"]).status.code(), Some(0));
}

#[test]
fn exported_mjcf_reparses_with_one_flex_per_panel() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["three_arm", "closed_box", "catapult"] {
        let out_path = dir.path().join(format!("{name}.xml"));
        let out = origami(&["export", &format!("fixture:{name}"), "--out", arg(&out_path)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let xml = std::fs::read_to_string(&out_path).unwrap();
        let doc = roxmltree::Document::parse(&xml).unwrap();
        let flexes = doc.descendants().filter(|n| n.has_tag_name("flex")).count();
        let pattern = origami_core::fixtures::by_name(name).unwrap();
        assert_eq!(flexes, pattern.panels().len(), "{name}");
        assert_eq!(summary(&out)["flex_count"], flexes);
    }
}

#[test]
fn mesh_lists_triangles_per_panel() {
    let out = origami(&["mesh", "fixture:accordion"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let (body, last) = stdout.trim_end().rsplit_once('\n').unwrap();
    let mesh: Value = serde_json::from_str(body).unwrap();
    assert_eq!(mesh["triangles"].as_array().unwrap().len(), 8);
    assert_eq!(serde_json::from_str::<Value>(last).unwrap()["triangles"], 8);
}

#[test]
fn simulate_writes_one_frame_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames.ndjson");
    let out = origami(&["simulate", "fixture:three_arm", "--frames", arg(&frames), "--max-time", "0.1", "--no-early-stop"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&frames).unwrap();
    let s = summary(&out);
    assert_eq!(text.lines().count() as u64, s["frames"].as_u64().unwrap());
    for line in text.lines() {
        let frame: Value = serde_json::from_str(line).unwrap();
        assert_eq!(frame["kp"].as_array().unwrap().len(), 6);
    }
}

#[test]
fn full_resolution_sweep_writes_every_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("heatmap.csv");
    let bins = dir.path().join("bins.csv");
    let out = origami(&[
        "sweep", "--grid", "72x40", "--max-time", "0.01", "--out", arg(&csv), "--bins-out", arg(&bins),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 72 * 40);
    assert_eq!(summary(&out)["rows"], 2880);
    assert_eq!(std::fs::read_to_string(&bins).unwrap().lines().count(), 1 + 12 * 10);
}

#[test]
fn optimize_writes_result_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = origami(&[
        "optimize", "--generations", "2", "--population", "4", "--max-time", "0.3", "--seed", "5", "--out",
        arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let result: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert!(result.is_object());
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(summary(&out)["generations"], 2);
}
