//! Seeded synthetic scenes: a ground grid ringed by candidate cameras.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, Scene};
use crate::grid::{GroundGrid, DEFAULT_CELL_SIZE_M};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneGenParams {
    pub n_cameras: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub cell_size_m: f64,
    /// Fraction of cameras that are jittered copies of another camera.
    pub near_duplicate_fraction: f64,
    /// Fraction of cameras mounted on the boundary; the rest sit inside.
    pub perimeter_fraction: f64,
    /// Distance outside the grid boundary at which boundary cameras stand.
    pub setback_range_m: (f64, f64),
    pub height_range_m: (f64, f64),
    pub hfov_range_deg: (f64, f64),
    pub max_range_m: (f64, f64),
    pub seed: u64,
}

impl Default for SceneGenParams {
    fn default() -> Self {
        Self {
            n_cameras: 10,
            grid_h: 80,
            grid_w: 80,
            cell_size_m: DEFAULT_CELL_SIZE_M,
            near_duplicate_fraction: 0.2,
            perimeter_fraction: 0.75,
            setback_range_m: (2.0, 6.0),
            height_range_m: (3.0, 10.0),
            hfov_range_deg: (50.0, 100.0),
            max_range_m: (15.0, 35.0),
            seed: 0,
        }
    }
}

impl SceneGenParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_cameras == 0 {
            return Err(Error::config("n_cameras", "must be at least 1"));
        }
        for (field, v) in [
            ("near_duplicate_fraction", self.near_duplicate_fraction),
            ("perimeter_fraction", self.perimeter_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(field, "must lie in [0, 1]"));
            }
        }
        for (field, (lo, hi)) in [
            ("height_range_m", self.height_range_m),
            ("hfov_range_deg", self.hfov_range_deg),
            ("max_range_m", self.max_range_m),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::config(field, "needs 0 < lo <= hi"));
            }
        }
        let (s_lo, s_hi) = self.setback_range_m;
        if !(s_lo >= 0.0 && s_lo <= s_hi && s_hi.is_finite()) {
            return Err(Error::config("setback_range_m", "needs 0 <= lo <= hi"));
        }
        if self.hfov_range_deg.1 >= 170.0 {
            return Err(Error::config("hfov_range_deg", "must stay below 170 degrees"));
        }
        GroundGrid::new(self.grid_h, self.grid_w, self.cell_size_m, [0.0, 0.0])?;
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Build a camera at `pos` aimed at `target`.
fn aimed(id: String, pos: [f64; 3], target: [f64; 2], hfov_deg: f64, range: f64) -> CameraPose {
    let dx = target[0] - pos[0];
    let dy = target[1] - pos[1];
    let ground = dx.hypot(dy).max(1e-3);
    let hfov = hfov_deg.to_radians();
    let vfov = 0.6 * hfov;
    // Keep the lower image edge landing well inside the range disk.
    let steepest_needed = vfov / 2.0 - (pos[2] / (0.7 * range)).atan();
    let pitch = (-(pos[2] / ground).atan())
        .min(steepest_needed)
        .clamp(-80f64.to_radians(), -10f64.to_radians());
    CameraPose {
        id,
        position_3d: pos,
        yaw: dy.atan2(dx),
        pitch,
        horizontal_fov_rad: hfov,
        vertical_fov_rad: vfov,
        max_range_m: range,
    }
}

/// Generate a scene. Ids are `cam00`, `cam01`, ... assigned in a shuffled
/// order so id order carries no information about placement.
pub fn generate_scene(id: impl Into<String>, params: &SceneGenParams) -> Result<Scene> {
    params.validate()?;
    let grid = GroundGrid::new(params.grid_h, params.grid_w, params.cell_size_m, [0.0, 0.0])?;
    let (lo, hi) = grid.extent();
    let span = [hi[0] - lo[0], hi[1] - lo[1]];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let n = params.n_cameras;
    let n_dup = if n > 1 {
        ((n as f64 * params.near_duplicate_fraction).round() as usize).min(n - 1)
    } else {
        0
    };
    let n_base = n - n_dup;

    let mut poses: Vec<CameraPose> = Vec::with_capacity(n);
    for _ in 0..n_base {
        let height = uniform(&mut rng, params.height_range_m);
        let ground = if rng.random::<f64>() < params.perimeter_fraction {
            let t = rng.random::<f64>();
            let back = uniform(&mut rng, params.setback_range_m);
            match rng.random_range(0..4u8) {
                0 => [lo[0] + t * span[0], lo[1] - back],
                1 => [lo[0] + t * span[0], hi[1] + back],
                2 => [lo[0] - back, lo[1] + t * span[1]],
                _ => [hi[0] + back, lo[1] + t * span[1]],
            }
        } else {
            [
                lo[0] + span[0] * rng.random_range(0.1..0.9),
                lo[1] + span[1] * rng.random_range(0.1..0.9),
            ]
        };
        let mut target = [
            lo[0] + span[0] * rng.random_range(0.2..0.8),
            lo[1] + span[1] * rng.random_range(0.2..0.8),
        ];
        if (target[0] - ground[0]).hypot(target[1] - ground[1]) < 1.0 {
            target[0] += 2.0;
        }
        let hfov = uniform(&mut rng, params.hfov_range_deg);
        let range = uniform(&mut rng, params.max_range_m);
        poses.push(aimed(String::new(), [ground[0], ground[1], height], target, hfov, range));
    }
    for _ in 0..n_dup {
        let src = poses[rng.random_range(0..n_base)].clone();
        let mut copy = src;
        copy.position_3d[0] += rng.random_range(-0.5..0.5);
        copy.position_3d[1] += rng.random_range(-0.5..0.5);
        copy.yaw += rng.random_range(-5f64..5.0).to_radians();
        poses.push(copy);
    }

    let width = (n.saturating_sub(1)).to_string().len().max(2);
    let mut labels: Vec<usize> = (0..n).collect();
    labels.shuffle(&mut rng);
    for (pose, label) in poses.iter_mut().zip(labels) {
        pose.id = format!("cam{label:0width$}");
    }
    poses.sort_by(|a, b| a.id.cmp(&b.id));
    Scene::new(id, grid, poses)
}
