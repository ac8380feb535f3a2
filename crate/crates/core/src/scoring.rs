//! View-selection scores.
//!
//! Every score shares the shape `(sum of D over a region) / (h*w) * S_vd`.
//! The geometric score sums over the combined footprint `H_v^k`; the mask
//! and density scores sum over the binarized prediction `B_k`, and the
//! density score additionally weights each cell by the predicted density.

use serde::{Deserialize, Serialize};

use crate::crowd::DensityMap;
use crate::error::{Error, Result};
use crate::geometry::{ground_axis_and_position, CameraPose, FovFootprint, Scene};
use crate::grid::{Field, GroundGrid, Mask};

pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreVariant {
    Geometric,
    Mask,
    Density,
}

/// Threshold used to binarize a predicted density map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum SigmaMode {
    /// Mean over all cells of the map (counting setting).
    MeanOfMap,
    /// Fixed threshold (0.6 in the localization setting).
    Absolute(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub lambda: f64,
    pub epsilon: f64,
    pub sigma_mode: SigmaMode,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            epsilon: DEFAULT_EPSILON,
            sigma_mode: SigmaMode::MeanOfMap,
        }
    }
}

impl ScoreParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", "must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        if let SigmaMode::Absolute(s) = self.sigma_mode {
            if !s.is_finite() {
                return Err(Error::config("sigma_mode", "absolute threshold must be finite"));
            }
        }
        Ok(())
    }
}

/// Which factors of the score drive selection (term ablation).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreTerms {
    /// `S_sc` only.
    Sc,
    /// `S_sc * S_ad`.
    ScAd,
    /// `S_sc * S_vd`.
    ScVd,
    /// `S_sc * S_ad * S_vd`.
    #[default]
    All,
}

impl ScoreTerms {
    pub const ALL: [ScoreTerms; 4] = [ScoreTerms::Sc, ScoreTerms::ScAd, ScoreTerms::ScVd, ScoreTerms::All];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub variant: ScoreVariant,
    pub s_sc: f64,
    pub s_ad: f64,
    pub s_vd: f64,
    pub total: f64,
    /// Cells in the summation region (`H_v^k` or `B_k`).
    pub region_cells: usize,
    /// Sum of `D_p` (or `D_p^den`) over the region.
    pub field_sum: f64,
    pub params: ScoreParams,
}

impl ScoreBreakdown {
    /// Value maximized during view addition for the chosen term subset.
    pub fn objective(&self, terms: ScoreTerms) -> f64 {
        match terms {
            ScoreTerms::Sc => self.s_sc,
            ScoreTerms::ScAd => self.s_sc * self.s_ad,
            ScoreTerms::ScVd => self.s_sc * self.s_vd,
            ScoreTerms::All => self.total,
        }
    }
}

/// `S_sc`: visible cells over `h*w`.
pub fn score_scene_coverage(visible: &Mask, grid: &GroundGrid) -> Result<f64> {
    grid.check_shape(visible)?;
    Ok(visible.count() as f64 / grid.n_cells() as f64)
}

/// `D_p = sum_i 1/|p - c_i|` over the cameras whose footprint contains `p`.
///
/// Distances are metric and floored at half a cell.
pub fn inverse_distance_field(
    cameras: &[&CameraPose],
    footprints: &[&FovFootprint],
    grid: &GroundGrid,
) -> Result<Field> {
    if cameras.len() != footprints.len() {
        return Err(Error::LengthMismatch(cameras.len(), footprints.len()));
    }
    let mut field = grid.field(0.0);
    let floor = grid.cell_size_m / 2.0;
    for (cam, fp) in cameras.iter().zip(footprints) {
        grid.check_shape(&fp.mask)?;
        let [cx, cy] = cam.ground_position();
        let data = field.data_mut();
        for idx in fp.mask.true_indices() {
            let (r, c) = grid.row_col(idx);
            let [x, y] = grid.cell_center(r, c);
            let d = (x - cx).hypot(y - cy).max(floor);
            data[idx] += 1.0 / d;
        }
    }
    Ok(field)
}

/// `S_ad`: mean of the field over the visible cells.
pub fn score_average_distance(field: &Field, visible: &Mask) -> Result<f64> {
    let n = visible.count();
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(field.sum_over(visible)? / n as f64)
}

/// Ground-plane dot product of two optical axes; zero when either camera
/// looks straight down.
fn axis_dot(a: &CameraPose, b: &CameraPose) -> f64 {
    match (ground_axis_and_position(a), ground_axis_and_position(b)) {
        (Ok((oa, _)), Ok((ob, _))) => oa[0] * ob[0] + oa[1] * ob[1],
        _ => 0.0,
    }
}

/// `S_vd = exp(-lambda * sum_{i<j} (o_i . o_j) / (|c_i - c_j| + epsilon))`.
pub fn score_view_diversity(cameras: &[&CameraPose], lambda: f64, epsilon: f64) -> f64 {
    let mut exponent = 0.0;
    for (i, a) in cameras.iter().enumerate() {
        let ca = a.ground_position();
        for b in &cameras[i + 1..] {
            let cb = b.ground_position();
            let dist = (ca[0] - cb[0]).hypot(ca[1] - cb[1]);
            exponent += axis_dot(a, b) / (dist + epsilon);
        }
    }
    (-lambda * exponent).exp()
}

/// Cells whose value strictly exceeds the threshold.
pub fn binarize_density(density: &DensityMap, sigma_mode: SigmaMode) -> Mask {
    let values = density.values();
    let threshold = match sigma_mode {
        SigmaMode::MeanOfMap => values.mean(),
        SigmaMode::Absolute(s) => s,
    };
    let data = values.data().iter().map(|&v| v > threshold).collect();
    Mask::from_vec(values.height(), values.width(), data).expect("same shape as density")
}

fn resolve<'a>(scene: &'a Scene, selected: &[usize]) -> Result<(Vec<&'a CameraPose>, Vec<&'a FovFootprint>)> {
    if selected.is_empty() {
        return Err(Error::config("selected", "at least one camera is required"));
    }
    let mut cams = Vec::with_capacity(selected.len());
    let mut fps = Vec::with_capacity(selected.len());
    for &i in selected {
        let cam = scene
            .cameras
            .get(i)
            .ok_or_else(|| Error::UnknownCamera(format!("#{i}")))?;
        cams.push(cam);
        fps.push(&scene.footprints[i]);
    }
    Ok((cams, fps))
}

/// Shared evaluation: `(sum_{p in region} weight(p) * D_p) / (h*w) * S_vd`.
///
/// An empty region yields `total = 0` and `s_ad = 0`.
pub fn score_over_region(
    selected: &[usize],
    scene: &Scene,
    region: &Mask,
    weights: Option<&Field>,
    variant: ScoreVariant,
    params: &ScoreParams,
) -> Result<ScoreBreakdown> {
    params.validate()?;
    let grid = &scene.grid;
    grid.check_shape(region)?;
    if let Some(w) = weights {
        grid.check_shape(w)?;
    }
    let (cams, fps) = resolve(scene, selected)?;
    let field = inverse_distance_field(&cams, &fps, grid)?;

    let mut field_sum = 0.0;
    let mut region_cells = 0usize;
    for idx in region.true_indices() {
        region_cells += 1;
        let d = field.data()[idx];
        field_sum += match weights {
            Some(w) => w.data()[idx] * d,
            None => d,
        };
    }

    let area = grid.n_cells() as f64;
    let s_vd = score_view_diversity(&cams, params.lambda, params.epsilon);
    let s_sc = region_cells as f64 / area;
    let s_ad = if region_cells == 0 { 0.0 } else { field_sum / region_cells as f64 };
    Ok(ScoreBreakdown {
        variant,
        s_sc,
        s_ad,
        s_vd,
        total: field_sum / area * s_vd,
        region_cells,
        field_sum,
        params: *params,
    })
}

/// `S_g` over the combined footprint of `selected` (indices into the scene).
pub fn score_geometric(selected: &[usize], scene: &Scene, params: &ScoreParams) -> Result<ScoreBreakdown> {
    let visible = scene.visibility(selected);
    score_over_region(selected, scene, &visible, None, ScoreVariant::Geometric, params)
}

/// `S_mask`: the geometric score with `H_v^k` replaced by `B_k`.
pub fn score_mask(
    selected: &[usize],
    scene: &Scene,
    prediction: &DensityMap,
    params: &ScoreParams,
) -> Result<ScoreBreakdown> {
    scene.grid.check_shape(prediction.values())?;
    let region = binarize_density(prediction, params.sigma_mode);
    score_over_region(selected, scene, &region, None, ScoreVariant::Mask, params)
}

/// `S_density`: `S_mask` with `D_p` replaced by `M_k(p) * D_p`.
pub fn score_density(
    selected: &[usize],
    scene: &Scene,
    prediction: &DensityMap,
    params: &ScoreParams,
) -> Result<ScoreBreakdown> {
    scene.grid.check_shape(prediction.values())?;
    let region = binarize_density(prediction, params.sigma_mode);
    score_over_region(
        selected,
        scene,
        &region,
        Some(prediction.values()),
        ScoreVariant::Density,
        params,
    )
}
