use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn viewsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viewsel"))
        .args(args)
        .env_remove("VIEWSEL_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = viewsel(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_json(path: &Path, v: &Value) {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 20x20 grid (10 m square) under one downward-looking camera that sees all
/// of it, plus `extra` cameras that see nothing.
fn overhead_scene(dir: &Path, extra: usize) {
    let mut cams = vec![json!({
        "id": "top", "position": [5.0, 5.0, 10.0], "yaw": 0.0,
        "pitch": -std::f64::consts::FRAC_PI_2, "hfov": 1.6, "vfov": 1.6, "max_range": 100.0
    })];
    for i in 0..extra {
        cams.push(json!({
            "id": format!("far{i}"), "position": [200.0 + 10.0 * i as f64, 200.0, 5.0], "yaw": 0.0,
            "pitch": -0.5, "hfov": 1.0, "vfov": 0.8, "max_range": 10.0
        }));
    }
    let scene = json!({
        "id": "overhead",
        "grid": { "h": 20, "w": 20, "cell_size_m": 0.5, "origin": [0.0, 0.0] },
        "cameras": cams,
    });
    write_json(&dir.join("scene.json"), &scene);
    let mut csv = String::from("frame_id,person_idx,x_m,y_m\n");
    for f in 0..4u32 {
        for p in 0..(3 + f) {
            csv += &format!("{f},{p},{},{}\n", 2.25 + 1.5 * p as f64, 3.25 + f as f64);
        }
    }
    fs::write(dir.join("trace.csv"), csv).unwrap();
}

fn file_spec(dir: &Path, selection: Value) -> std::path::PathBuf {
    let spec = json!({
        "scene": { "path": "scene.json" },
        "trace": { "path": "trace.csv" },
        "selection": selection,
        "predictor": { "kind": "oracle", "kernel_sigma_cells": 1.0 },
    });
    let path = dir.join("spec.json");
    write_json(&path, &spec);
    path
}

fn generated_spec(dir: &Path) -> std::path::PathBuf {
    let spec = json!({
        "scene": { "generate": { "n_cameras": 8, "grid_h": 40, "grid_w": 40, "seed": 3 } },
        "trace": { "generate": { "n_frames": 8, "count_range": [20, 40], "seed": 4 } },
        "selection": { "k_max": 5, "n_frames": 4, "strategy": "random" },
        "repeats": 2,
    });
    let path = dir.join("spec.json");
    write_json(&path, &spec);
    path
}

#[test]
fn scene_gen_writes_the_requested_cameras_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&["scene-gen", "--cameras", "8", "--grid", "100x100", "--seed", "5", "--out", s(d)]);
    }
    let scene = read_json(&a.join("scene.json"));
    assert_eq!(scene["cameras"].as_array().unwrap().len(), 8);
    assert_eq!(scene["grid"]["h"], 100);
    for f in ["scene.json", "trace.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let hash = scene["spec_hash"].as_str().unwrap();
    let csv = fs::read_to_string(a.join("trace.csv")).unwrap();
    assert!(csv.starts_with(&format!("# spec_hash={hash}\n")));

    ok(&["validate", s(&a.join("scene.json"))]);
    ok(&["validate", s(&a.join("trace.csv"))]);
}

#[test]
fn random_selection_labels_k_views() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = generated_spec(tmp.path());
    ok(&["validate", s(&spec)]);
    let out = tmp.path().join("run");
    ok(&["select", "--spec", s(&spec), "--out", s(&out)]);
    let sel = read_json(&out.join("selection.json"));
    assert_eq!(sel["state"]["selected"].as_array().unwrap().len(), 5);
    let data = read_json(&out.join("dataset.json"));
    assert_eq!(data["budget_images"], 20);
    assert_eq!(fs::read_dir(out.join("gt")).unwrap().count(), 4);
    let run = read_json(&out.join("run.json"));
    assert_eq!(run["spec_hash"], sel["spec_hash"]);
}

#[test]
fn eval_refuses_a_different_spec_unless_forced() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = generated_spec(tmp.path());
    let out = tmp.path().join("run");
    ok(&["select", "--spec", s(&spec), "--out", s(&out)]);
    let run = out.join("run.json");
    ok(&["eval", "--run", s(&run), "--spec", s(&spec)]);
    let report = read_json(&out.join("eval.json"));
    assert_eq!(report["spec_hash"], read_json(&run)["spec_hash"]);

    let mut other = read_json(&spec);
    other["selection"]["seed"] = json!(99);
    let other_path = tmp.path().join("other.json");
    write_json(&other_path, &other);
    let refused = viewsel(&["eval", "--run", s(&run), "--spec", s(&other_path)]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("spec_hash"));
    ok(&["eval", "--run", s(&run), "--spec", s(&other_path), "--force"]);
}

#[test]
fn overhead_camera_wins_and_oracle_counts_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    overhead_scene(tmp.path(), 3);
    let spec = file_spec(
        tmp.path(),
        json!({ "k_max": 1, "n_frames": 2, "strategy": "density", "tau": null }),
    );
    let out = tmp.path().join("run");
    ok(&["select", "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(read_json(&out.join("selection.json"))["state"]["selected"], json!(["top"]));
    ok(&["eval", "--run", s(&out.join("run.json"))]);
    let report = read_json(&out.join("eval.json"));
    assert_eq!(report["cover_rate"], 1.0);
    assert!(report["counting"]["mae"].as_f64().unwrap() <= 0.5);
}

#[test]
fn blind_selection_predicts_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    overhead_scene(tmp.path(), 2);
    // Remove the overhead camera so only blind views remain.
    let mut scene = read_json(&tmp.path().join("scene.json"));
    scene["cameras"].as_array_mut().unwrap().remove(0);
    write_json(&tmp.path().join("scene.json"), &scene);
    let spec = file_spec(tmp.path(), json!({ "k_max": 1, "n_frames": 2, "strategy": "random" }));
    let out = tmp.path().join("run");
    ok(&["select", "--spec", s(&spec), "--out", s(&out)]);
    ok(&["eval", "--run", s(&out.join("run.json"))]);
    let report = read_json(&out.join("eval.json"));
    // Frames hold 3, 4, 5 and 6 persons.
    assert_eq!(report["counting"]["mae"], 4.5);
    assert_eq!(report["cover_rate"], 0.0);
}

#[test]
fn sweep_emits_one_row_per_cell_and_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = generated_spec(tmp.path());
    let out = tmp.path().join("sweep");
    let first = ok(&["sweep", "--spec", s(&spec), "--axis", "k", "--out", s(&out)]);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    assert!(String::from_utf8_lossy(&first.stdout).contains("computed 8 cells, reused 0"));
    assert!(fs::read_dir(out.join("heatmaps")).unwrap().count() > 0);

    let second = ok(&["sweep", "--spec", s(&spec), "--axis", "k", "--out", s(&out)]);
    assert!(String::from_utf8_lossy(&second.stdout).contains("computed 0 cells, reused 8"));
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap(), csv);
}

#[test]
fn exit_codes_separate_validation_from_io() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = viewsel(&["select", "--spec", s(&tmp.path().join("nope.json"))]);
    assert_eq!(missing.status.code(), Some(4));

    let spec = generated_spec(tmp.path());
    let mut bad = read_json(&spec);
    bad["selection"]["k_max"] = json!(50);
    write_json(&spec, &bad);
    let invalid = viewsel(&["select", "--spec", s(&spec)]);
    assert_eq!(invalid.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("k_max"));
}

#[test]
fn out_dir_falls_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let env_dir = tmp.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_viewsel"))
        .args(["scene-gen", "--cameras", "3", "--grid", "20x20", "--frames", "2"])
        .env("VIEWSEL_OUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(env_dir.join("scene.json").exists());
}
