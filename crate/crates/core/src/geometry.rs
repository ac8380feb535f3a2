//! Calibrated cameras, their ground footprints, and scene-level visibility.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GroundGrid, Mask};

/// Below this, the ground projection of the optical axis is treated as zero.
const AXIS_EPS: f64 = 1e-9;

/// A calibrated candidate camera. Angles are radians, lengths metres.
///
/// `yaw` is measured in the ground plane from world `+x` towards `+y`;
/// `pitch` is the elevation of the optical axis, negative below horizontal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub id: String,
    #[serde(rename = "position")]
    pub position_3d: [f64; 3],
    pub yaw: f64,
    pub pitch: f64,
    #[serde(rename = "hfov")]
    pub horizontal_fov_rad: f64,
    #[serde(rename = "vfov")]
    pub vertical_fov_rad: f64,
    #[serde(rename = "max_range")]
    pub max_range_m: f64,
}

impl CameraPose {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidCamera {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.position_3d.iter().any(|v| !v.is_finite()) {
            return Err(bad("position must be finite"));
        }
        if self.position_3d[2] <= 0.0 {
            return Err(bad("camera must be above ground (z > 0)"));
        }
        let pi = std::f64::consts::PI;
        for (name, fov) in [("hfov", self.horizontal_fov_rad), ("vfov", self.vertical_fov_rad)] {
            if !(fov > 0.0 && fov < pi) {
                return Err(bad(&format!("{name} must lie in (0, pi), got {fov}")));
            }
        }
        if !(self.max_range_m.is_finite() && self.max_range_m > 0.0) {
            return Err(bad("max_range must be positive"));
        }
        if !(self.yaw.is_finite() && self.pitch.is_finite()) {
            return Err(bad("yaw and pitch must be finite"));
        }
        Ok(())
    }

    /// Unit optical axis in world coordinates.
    pub fn forward(&self) -> [f64; 3] {
        let (sp, cp) = self.pitch.sin_cos();
        let (sy, cy) = self.yaw.sin_cos();
        [cp * cy, cp * sy, sp]
    }

    /// Camera right and up vectors completing the orthonormal frame.
    fn right_up(&self) -> ([f64; 3], [f64; 3]) {
        let (sy, cy) = self.yaw.sin_cos();
        let right = [sy, -cy, 0.0];
        let up = cross(right, self.forward());
        (right, up)
    }

    pub fn ground_position(&self) -> [f64; 2] {
        [self.position_3d[0], self.position_3d[1]]
    }
}

/// Ground footprint `H_i` of one camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FovFootprint {
    pub camera_id: String,
    #[serde(with = "crate::grid::rle")]
    pub mask: Mask,
    pub area_cells: usize,
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Rasterize the ground footprint of a pinhole camera.
///
/// The four image-corner rays span the side planes of the view pyramid.
/// Each side plane cuts the ground in a half-plane; the footprint is the
/// intersection of those half-planes with the range disk around `c_i`,
/// sampled at cell centres.
pub fn project_footprint(camera: &CameraPose, grid: &GroundGrid) -> Result<FovFootprint> {
    camera.validate()?;
    grid.validate()?;

    let forward = camera.forward();
    let (right, up) = camera.right_up();
    let th = (camera.horizontal_fov_rad / 2.0).tan();
    let tv = (camera.vertical_fov_rad / 2.0).tan();
    let corner = |a: f64, b: f64| -> [f64; 3] {
        [
            forward[0] + a * th * right[0] + b * tv * up[0],
            forward[1] + a * th * right[1] + b * tv * up[1],
            forward[2] + a * th * right[2] + b * tv * up[2],
        ]
    };
    let corners = [corner(1.0, 1.0), corner(1.0, -1.0), corner(-1.0, -1.0), corner(-1.0, 1.0)];

    // Ground half-planes a*x + b*y >= c, one per side of the pyramid.
    let [cx, cy, cz] = camera.position_3d;
    let half_planes: Vec<[f64; 3]> = (0..4)
        .map(|k| {
            let mut n = cross(corners[k], corners[(k + 1) % 4]);
            if dot(n, forward) < 0.0 {
                n = [-n[0], -n[1], -n[2]];
            }
            [n[0], n[1], n[0] * cx + n[1] * cy + n[2] * cz]
        })
        .collect();

    let mut mask = grid.mask(false);
    let range = camera.max_range_m;
    let range_sq = range * range;
    let cs = grid.cell_size_m;
    let col_lo = (((cx - range - grid.origin[0]) / cs).floor().max(0.0)) as usize;
    let row_lo = (((cy - range - grid.origin[1]) / cs).floor().max(0.0)) as usize;
    let col_hi = ((cx + range - grid.origin[0]) / cs).ceil();
    let row_hi = ((cy + range - grid.origin[1]) / cs).ceil();
    if col_hi < 0.0 || row_hi < 0.0 {
        return Ok(FovFootprint {
            camera_id: camera.id.clone(),
            mask,
            area_cells: 0,
        });
    }
    let col_hi = (col_hi as usize).min(grid.width_cells);
    let row_hi = (row_hi as usize).min(grid.height_cells);

    let mut area = 0;
    for row in row_lo..row_hi {
        for col in col_lo..col_hi {
            let [x, y] = grid.cell_center(row, col);
            let (dx, dy) = (x - cx, y - cy);
            if dx * dx + dy * dy > range_sq {
                continue;
            }
            if half_planes.iter().all(|h| h[0] * x + h[1] * y >= h[2]) {
                mask.set(row, col, true);
                area += 1;
            }
        }
    }
    Ok(FovFootprint {
        camera_id: camera.id.clone(),
        mask,
        area_cells: area,
    })
}

/// Cellwise union of footprint masks (`H_v^k`).
pub fn combined_visibility<'a, I>(footprints: I, grid: &GroundGrid) -> Result<Mask>
where
    I: IntoIterator<Item = &'a FovFootprint>,
{
    let mut out = grid.mask(false);
    for fp in footprints {
        grid.check_shape(&fp.mask)?;
        out.or_assign(&fp.mask)?;
    }
    Ok(out)
}

/// Ground-plane optical axis `o_i` (unit) and ground position `c_i`.
pub fn ground_axis_and_position(camera: &CameraPose) -> Result<([f64; 2], [f64; 2])> {
    let f = camera.forward();
    let norm = (f[0] * f[0] + f[1] * f[1]).sqrt();
    if norm < AXIS_EPS {
        return Err(Error::DegenerateAxis(camera.id.clone()));
    }
    Ok(([f[0] / norm, f[1] / norm], camera.ground_position()))
}

/// Ground grid plus candidate cameras and their precomputed footprints.
#[derive(Clone, Debug)]
pub struct Scene {
    pub id: String,
    pub grid: GroundGrid,
    pub cameras: Vec<CameraPose>,
    pub footprints: Vec<FovFootprint>,
    index: HashMap<String, usize>,
}

impl Scene {
    pub fn new(id: impl Into<String>, grid: GroundGrid, cameras: Vec<CameraPose>) -> Result<Self> {
        grid.validate()?;
        let mut index = HashMap::with_capacity(cameras.len());
        for (i, cam) in cameras.iter().enumerate() {
            cam.validate()?;
            if index.insert(cam.id.clone(), i).is_some() {
                return Err(Error::DuplicateCamera(cam.id.clone()));
            }
        }
        let footprints = cameras
            .par_iter()
            .map(|cam| project_footprint(cam, &grid))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id: id.into(),
            grid,
            cameras,
            footprints,
            index,
        })
    }

    pub fn n_cameras(&self) -> usize {
        self.cameras.len()
    }

    pub fn camera_index(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownCamera(id.to_string()))
    }

    /// Union of the footprints of the cameras at `indices`.
    pub fn visibility(&self, indices: &[usize]) -> Mask {
        let mut out = self.grid.mask(false);
        for &i in indices {
            out.or_assign(&self.footprints[i].mask)
                .expect("scene footprints share the scene grid");
        }
        out
    }

    /// Camera indices sorted by id; the canonical tie-break order.
    pub fn indices_by_id(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.cameras.len()).collect();
        order.sort_by(|&a, &b| self.cameras[a].id.cmp(&self.cameras[b].id));
        order
    }

    /// Checks the footprint invariants: one per camera, ids matching, areas
    /// consistent with the masks.
    pub fn validate(&self) -> Result<()> {
        if self.footprints.len() != self.cameras.len() {
            return Err(Error::config(
                "footprints",
                format!("{} footprints for {} cameras", self.footprints.len(), self.cameras.len()),
            ));
        }
        for (cam, fp) in self.cameras.iter().zip(&self.footprints) {
            if cam.id != fp.camera_id {
                return Err(Error::config("footprints", format!("id {} != {}", fp.camera_id, cam.id)));
            }
            self.grid.check_shape(&fp.mask)?;
            if fp.mask.count() != fp.area_cells {
                return Err(Error::config("footprints", format!("area mismatch for {}", cam.id)));
            }
        }
        Ok(())
    }

    pub fn to_config(&self) -> SceneConfig {
        SceneConfig {
            id: Some(self.id.clone()),
            grid: self.grid,
            cameras: self.cameras.clone(),
            spec_hash: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: SceneConfig = serde_json::from_str(&text)?;
        config.into_scene()
    }
}

/// On-disk scene description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub grid: GroundGrid,
    pub cameras: Vec<CameraPose>,
    /// Hash of the generator parameters that produced this file, when generated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_hash: Option<String>,
}

impl SceneConfig {
    pub fn into_scene(self) -> Result<Scene> {
        Scene::new(self.id.unwrap_or_else(|| "scene".into()), self.grid, self.cameras)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn cam(position: [f64; 3], yaw: f64, pitch: f64, fov: f64, range: f64) -> CameraPose {
        CameraPose {
            id: "c".into(),
            position_3d: position,
            yaw,
            pitch,
            horizontal_fov_rad: fov,
            vertical_fov_rad: fov,
            max_range_m: range,
        }
    }

    #[test]
    fn nadir_square_footprint() {
        let grid = GroundGrid::new(100, 100, 0.5, [0.0, 0.0]).unwrap();
        let c = cam([25.0, 25.0, 10.0], 0.0, -FRAC_PI_2, FRAC_PI_2, 100.0);
        let fp = project_footprint(&c, &grid).unwrap();
        assert_eq!(fp.area_cells, 1600);
        assert_eq!(fp.mask.count(), 1600);
        assert!(*fp.mask.get(30, 30));
        assert!(*fp.mask.get(69, 69));
        assert!(!fp.mask.get(70, 50));
        assert!(!fp.mask.get(29, 50));
    }

    #[test]
    fn tiny_range_covers_at_most_the_cell_below() {
        let grid = GroundGrid::new(20, 20, 0.5, [0.0, 0.0]).unwrap();
        let centred = cam([5.25, 5.25, 3.0], 0.0, -FRAC_PI_2, 1.0, 0.1);
        let fp = project_footprint(&centred, &grid).unwrap();
        assert_eq!(fp.area_cells, 1);
        assert!(*fp.mask.get(10, 10));
        let corner = cam([5.0, 5.0, 3.0], 0.0, -FRAC_PI_2, 1.0, 0.1);
        assert_eq!(project_footprint(&corner, &grid).unwrap().area_cells, 0);
    }

    #[test]
    fn rejects_cameras_on_the_ground() {
        let grid = GroundGrid::new(4, 4, 0.5, [0.0, 0.0]).unwrap();
        let c = cam([1.0, 1.0, 0.0], 0.0, -0.5, 1.0, 10.0);
        assert!(matches!(project_footprint(&c, &grid), Err(Error::InvalidCamera { .. })));
    }

    #[test]
    fn skyward_camera_sees_nothing() {
        let grid = GroundGrid::new(40, 40, 0.5, [0.0, 0.0]).unwrap();
        let c = cam([10.0, 10.0, 5.0], 0.0, 0.8, 0.6, 100.0);
        assert_eq!(project_footprint(&c, &grid).unwrap().area_cells, 0);
    }

    #[test]
    fn off_grid_camera_is_clipped() {
        let grid = GroundGrid::new(40, 40, 0.5, [0.0, 0.0]).unwrap();
        let c = cam([-200.0, -200.0, 5.0], 0.0, -0.8, 0.6, 10.0);
        assert_eq!(project_footprint(&c, &grid).unwrap().area_cells, 0);
    }

    #[test]
    fn ground_axes() {
        let (o, c) = ground_axis_and_position(&cam([5.0, 5.0, 10.0], 0.0, -FRAC_PI_4, 1.0, 1.0)).unwrap();
        assert!((o[0] - 1.0).abs() < 1e-12 && o[1].abs() < 1e-12);
        assert_eq!(c, [5.0, 5.0]);
        for pitch in [-1.5, -0.7, -0.01] {
            let (o, _) = ground_axis_and_position(&cam([0.0, 0.0, 1.0], FRAC_PI_2, pitch, 1.0, 1.0)).unwrap();
            assert!(o[0].abs() < 1e-12 && (o[1] - 1.0).abs() < 1e-12);
        }
        let (o, _) = ground_axis_and_position(&cam([0.0, 0.0, 1.0], FRAC_PI_4, -0.3, 1.0, 1.0)).unwrap();
        let h = 2f64.sqrt() / 2.0;
        assert!((o[0] - h).abs() < 1e-12 && (o[1] - h).abs() < 1e-12);
        let nadir = cam([0.0, 0.0, 1.0], 0.3, -FRAC_PI_2, 1.0, 1.0);
        assert!(matches!(ground_axis_and_position(&nadir), Err(Error::DegenerateAxis(_))));
    }

    #[test]
    fn union_of_disjoint_and_identical_masks() {
        let grid = GroundGrid::new(20, 20, 1.0, [0.0, 0.0]).unwrap();
        let mut a = grid.mask(false);
        let mut b = grid.mask(false);
        for i in 0..100 {
            a.data_mut()[i] = true;
            b.data_mut()[200 + i] = true;
        }
        let fa = FovFootprint { camera_id: "a".into(), mask: a.clone(), area_cells: 100 };
        let fb = FovFootprint { camera_id: "b".into(), mask: b, area_cells: 100 };
        assert_eq!(combined_visibility([&fa, &fb], &grid).unwrap().count(), 200);
        assert_eq!(combined_visibility([&fa, &fa], &grid).unwrap(), a);
        assert_eq!(combined_visibility([], &grid).unwrap(), grid.mask(false));
        let other = GroundGrid::new(10, 20, 1.0, [0.0, 0.0]).unwrap();
        assert!(combined_visibility([&fa], &other).is_err());
    }

    #[test]
    fn scene_rejects_duplicate_ids() {
        let grid = GroundGrid::new(10, 10, 0.5, [0.0, 0.0]).unwrap();
        let c = cam([1.0, 1.0, 3.0], 0.0, -0.5, 1.0, 10.0);
        assert!(matches!(
            Scene::new("s", grid, vec![c.clone(), c]),
            Err(Error::DuplicateCamera(_))
        ));
    }
}
