//! Stand-in for the downstream multi-view counting model.
//!
//! A predictor maps (frame, visibility of the input views) to a ground-plane
//! density map. The oracle variant returns the exact density of the visible
//! persons. The noisy variant perturbs those persons (misses, position
//! jitter, global count scale) with a strength that decays as the simulated
//! model is trained on more labeled view-frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::crowd::{count_visible, rasterize_density, rasterize_points, CrowdFrame, DensityMap, DEFAULT_KERNEL_SIGMA_CELLS};
use crate::error::{Error, Result};
use crate::geometry::Scene;
use crate::grid::Mask;

/// Training progress of the simulated model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationState {
    /// Labeled view-frames consumed in training so far.
    pub labeled_view_frames: u64,
    /// Pseudo-labeled view-frames consumed in training so far.
    pub pseudo_view_frames: u64,
    pub quality: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub miss_rate: f64,
    pub position_jitter_m: f64,
    pub count_noise_rel: f64,
    pub kernel_sigma_cells: f64,
    pub seed: u64,
    /// Learning-curve scale: quality = 1 - exp(-effective / q_scale).
    pub q_scale: f64,
    /// Weight of one pseudo-labeled view-frame relative to a labeled one.
    pub pseudo_weight: f64,
    pub calibration: CalibrationState,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            miss_rate: 0.3,
            position_jitter_m: 1.0,
            count_noise_rel: 0.2,
            kernel_sigma_cells: DEFAULT_KERNEL_SIGMA_CELLS,
            seed: 0,
            q_scale: 300.0,
            pseudo_weight: 0.25,
            calibration: CalibrationState::default(),
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.miss_rate) {
            return Err(Error::config("predictor.miss_rate", "must lie in [0, 1)"));
        }
        if !(self.position_jitter_m >= 0.0 && self.position_jitter_m.is_finite()) {
            return Err(Error::config("predictor.position_jitter_m", "must be >= 0"));
        }
        if !(self.count_noise_rel >= 0.0 && self.count_noise_rel.is_finite()) {
            return Err(Error::config("predictor.count_noise_rel", "must be >= 0"));
        }
        if !(self.kernel_sigma_cells > 0.0 && self.kernel_sigma_cells.is_finite()) {
            return Err(Error::config("predictor.kernel_sigma_cells", "must be positive"));
        }
        if !(self.q_scale > 0.0 && self.q_scale.is_finite()) {
            return Err(Error::config("predictor.q_scale", "must be positive"));
        }
        if !(self.pseudo_weight >= 0.0 && self.pseudo_weight.is_finite()) {
            return Err(Error::config("predictor.pseudo_weight", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.calibration.quality) {
            return Err(Error::config("predictor.calibration.quality", "must lie in [0, 1]"));
        }
        Ok(())
    }

    fn effective_view_frames(&self) -> f64 {
        self.calibration.labeled_view_frames as f64
            + self.pseudo_weight * self.calibration.pseudo_view_frames as f64
    }
}

/// Pluggable predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predictor {
    Oracle { kernel_sigma_cells: f64 },
    Noisy(PredictorConfig),
}

impl Default for Predictor {
    fn default() -> Self {
        Predictor::Noisy(PredictorConfig::default())
    }
}

impl Predictor {
    pub fn oracle() -> Self {
        Predictor::Oracle {
            kernel_sigma_cells: DEFAULT_KERNEL_SIGMA_CELLS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Predictor::Oracle { kernel_sigma_cells } => {
                if *kernel_sigma_cells > 0.0 && kernel_sigma_cells.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config("predictor.kernel_sigma_cells", "must be positive"))
                }
            }
            Predictor::Noisy(cfg) => cfg.validate(),
        }
    }

    pub fn kernel_sigma_cells(&self) -> f64 {
        match self {
            Predictor::Oracle { kernel_sigma_cells } => *kernel_sigma_cells,
            Predictor::Noisy(cfg) => cfg.kernel_sigma_cells,
        }
    }

    pub fn quality(&self) -> f64 {
        match self {
            Predictor::Oracle { .. } => 1.0,
            Predictor::Noisy(cfg) => cfg.calibration.quality,
        }
    }

    pub fn predict(&self, frame: &CrowdFrame, visibility: &Mask, scene: &Scene) -> Result<DensityMap> {
        match self {
            Predictor::Oracle { kernel_sigma_cells } => oracle_predict(frame, visibility, scene, *kernel_sigma_cells),
            Predictor::Noisy(cfg) => noisy_predict(frame, visibility, scene, cfg),
        }
    }

    /// Credit one training epoch; the oracle is already perfect.
    pub fn calibrate(&self, labeled_view_frames: u64, pseudo_view_frames: u64) -> Predictor {
        match self {
            Predictor::Oracle { .. } => self.clone(),
            Predictor::Noisy(cfg) => Predictor::Noisy(calibrate_with_pseudo(cfg, labeled_view_frames, pseudo_view_frames)),
        }
    }
}

/// Exact density of the persons visible under the selected views.
pub fn oracle_predict(
    frame: &CrowdFrame,
    selected_visibility: &Mask,
    scene: &Scene,
    kernel_sigma_cells: f64,
) -> Result<DensityMap> {
    let grid = &scene.grid;
    grid.check_shape(selected_visibility)?;
    let visible = CrowdFrame {
        frame_id: frame.frame_id,
        persons: crate::crowd::visible_persons(frame, selected_visibility, grid)?,
    };
    rasterize_density(&visible, grid, kernel_sigma_cells, Some(selected_visibility))
}

const SCALE_STREAM: u64 = 0x5ca1_e000_0000_0001;

/// splitmix64 finalizer, used to derive independent per-person streams.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream(seed: u64, frame_id: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(seed ^ mix(frame_id)) ^ key))
}

/// Oracle prediction perturbed person-wise.
///
/// Noise for a person depends only on `(seed, frame_id, person index)`, so
/// the same person is missed or displaced consistently whichever views are
/// selected.
pub fn noisy_predict(
    frame: &CrowdFrame,
    selected_visibility: &Mask,
    scene: &Scene,
    config: &PredictorConfig,
) -> Result<DensityMap> {
    let q = config.calibration.quality;
    if q >= 1.0 {
        return oracle_predict(frame, selected_visibility, scene, config.kernel_sigma_cells);
    }
    let grid = &scene.grid;
    grid.check_shape(selected_visibility)?;
    let residual = 1.0 - q;
    let drop_p = config.miss_rate * residual;
    let jitter = config.position_jitter_m * residual;
    let normal = (jitter > 0.0).then(|| Normal::new(0.0, jitter).expect("finite jitter"));
    let (lo, hi) = grid.extent();

    let mut kept = Vec::with_capacity(frame.persons.len());
    for (idx, person) in frame.persons.iter().enumerate() {
        let (r, c) = grid.cell_of(person.position);
        if !*selected_visibility.get(r, c) {
            continue;
        }
        let mut rng = stream(config.seed, frame.frame_id, idx as u64);
        if rng.random::<f64>() < drop_p {
            continue;
        }
        let mut p = person.position;
        if let Some(n) = &normal {
            p[0] = (p[0] + n.sample(&mut rng)).clamp(lo[0], hi[0]);
            p[1] = (p[1] + n.sample(&mut rng)).clamp(lo[1], hi[1]);
        }
        kept.push(p);
    }
    let density = rasterize_points(kept, grid, config.kernel_sigma_cells, Some(selected_visibility))?;

    let noise = config.count_noise_rel * residual;
    if noise > 0.0 {
        let mut rng = stream(config.seed, frame.frame_id, SCALE_STREAM);
        let factor = (1.0 + noise * rng.random_range(-1.0..=1.0)).max(0.0);
        Ok(density.scaled(factor))
    } else {
        Ok(density)
    }
}

/// Credit newly labeled view-frames and update quality.
pub fn calibrate(config: &PredictorConfig, newly_labeled_view_frames: u64) -> PredictorConfig {
    calibrate_with_pseudo(config, newly_labeled_view_frames, 0)
}

pub fn calibrate_with_pseudo(config: &PredictorConfig, labeled: u64, pseudo: u64) -> PredictorConfig {
    let mut out = config.clone();
    out.calibration.labeled_view_frames += labeled;
    out.calibration.pseudo_view_frames += pseudo;
    let learned = 1.0 - (-out.effective_view_frames() / out.q_scale).exp();
    // Never regress below the starting quality (e.g. a pretrained model).
    out.calibration.quality = learned.max(config.calibration.quality).clamp(0.0, 1.0);
    out
}

/// Training metric: mean absolute count error against the labeled
/// (selected-view) ground truth over the training frames.
pub fn training_mae(predictor: &Predictor, scene: &Scene, frames: &[CrowdFrame], visibility: &Mask) -> Result<f64> {
    if frames.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for frame in frames {
        let pred = predictor.predict(frame, visibility, scene)?.sum();
        let gt = count_visible(frame, visibility, &scene.grid) as f64;
        total += (pred - gt).abs();
    }
    Ok(total / frames.len() as f64)
}
