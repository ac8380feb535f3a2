#![allow(dead_code)]

use proptest::prelude::*;
use viewsel_core::crowd::{generate_crowd_trace, CrowdFrame};
use viewsel_core::geometry::{CameraPose, Scene};
use viewsel_core::grid::GroundGrid;
use viewsel_core::scenegen::{generate_scene, SceneGenParams};

pub fn grid(h: usize, w: usize) -> GroundGrid {
    GroundGrid::new(h, w, 0.5, [0.0, 0.0]).unwrap()
}

pub fn camera(id: &str, pos: [f64; 3], yaw_deg: f64, pitch_deg: f64, hfov_deg: f64, vfov_deg: f64, range: f64) -> CameraPose {
    CameraPose {
        id: id.into(),
        position_3d: pos,
        yaw: yaw_deg.to_radians(),
        pitch: pitch_deg.to_radians(),
        horizontal_fov_rad: hfov_deg.to_radians(),
        vertical_fov_rad: vfov_deg.to_radians(),
        max_range_m: range,
    }
}

/// Camera somewhere around a 15 m x 15 m grid, looking down at an angle.
pub fn arb_camera() -> impl Strategy<Value = CameraPose> {
    (
        -5.0..20.0f64,
        -5.0..20.0f64,
        1.0..10.0f64,
        0.0..360.0f64,
        -85.0..-5.0f64,
        20.0..120.0f64,
        20.0..100.0f64,
        3.0..40.0f64,
    )
        .prop_map(|(x, y, z, yaw, pitch, h, v, r)| camera("c", [x, y, z], yaw, pitch, h, v, r))
}

pub fn small_scene(seed: u64, n_cameras: usize, cells: usize) -> Scene {
    let params = SceneGenParams {
        n_cameras,
        grid_h: cells,
        grid_w: cells,
        seed,
        ..Default::default()
    };
    generate_scene(format!("s{seed}"), &params).unwrap()
}

pub fn trace_for(scene: &Scene, n_frames: usize, seed: u64) -> Vec<CrowdFrame> {
    generate_crowd_trace(&scene.grid, n_frames, (30, 60), 0.7, seed).unwrap()
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Per-point frustum membership: the ray to `p` must lie within both
/// half-angles and the ground distance within range. Returns the membership
/// and the smallest constraint slack, so callers can skip boundary cells.
pub fn frustum_contains(cam: &CameraPose, p: [f64; 2]) -> (bool, f64) {
    let f = [
        cam.pitch.cos() * cam.yaw.cos(),
        cam.pitch.cos() * cam.yaw.sin(),
        cam.pitch.sin(),
    ];
    let side = cross(f, [0.0, 0.0, 1.0]);
    let n = dot(side, side).sqrt();
    let right = [side[0] / n, side[1] / n, side[2] / n];
    let up = cross(right, f);
    let c = cam.position_3d;
    let v = [p[0] - c[0], p[1] - c[1], -c[2]];
    let depth = dot(v, f);
    let th = (cam.horizontal_fov_rad / 2.0).tan();
    let tv = (cam.vertical_fov_rad / 2.0).tan();
    let len = dot(v, v).sqrt();
    let ground = (v[0] * v[0] + v[1] * v[1]).sqrt();
    let slacks = [
        depth / len,
        (th * depth - dot(v, right).abs()) / len,
        (tv * depth - dot(v, up).abs()) / len,
        cam.max_range_m - ground,
    ];
    let inside = slacks.iter().all(|&s| s >= 0.0);
    let margin = slacks.iter().map(|s| s.abs()).fold(f64::INFINITY, f64::min);
    (inside, margin)
}
