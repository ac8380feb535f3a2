//! Pseudo-supervision pairs mixing selected and unselected views.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crowd::{rasterize_density, visible_persons, CrowdFrame, DensityMap};
use crate::error::{Error, Result};
use crate::geometry::Scene;
use crate::grid::Mask;
use crate::selection::SelectionState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStage {
    /// Selected views plus one unselected view, during view selection.
    ViewSel,
    /// One selected view plus K-1 unselected views, after selection.
    ModelTrain,
}

/// Which stages emit pseudo pairs (pseudo-label ablation).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PseudoStages {
    None,
    ViewSel,
    ModelTrain,
    #[default]
    Both,
}

impl PseudoStages {
    pub const ALL: [PseudoStages; 4] = [PseudoStages::None, PseudoStages::ViewSel, PseudoStages::ModelTrain, PseudoStages::Both];

    pub fn includes(self, stage: PairStage) -> bool {
        matches!(
            (self, stage),
            (PseudoStages::Both, _)
                | (PseudoStages::ViewSel, PairStage::ViewSel)
                | (PseudoStages::ModelTrain, PairStage::ModelTrain)
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoPair {
    pub frame_id: u64,
    pub input_view_ids: Vec<String>,
    pub gt_density: DensityMap,
    pub loss_mask: Mask,
    pub stage: PairStage,
}

/// Selected views with their own (selected-view) ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct RealPair {
    pub frame_id: u64,
    pub input_view_ids: Vec<String>,
    pub gt_density: DensityMap,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainingPair {
    Real(RealPair),
    Pseudo(PseudoPair),
}

impl TrainingPair {
    pub fn input_view_count(&self) -> usize {
        match self {
            TrainingPair::Real(p) => p.input_view_ids.len(),
            TrainingPair::Pseudo(p) => p.input_view_ids.len(),
        }
    }

    pub fn is_pseudo(&self) -> bool {
        matches!(self, TrainingPair::Pseudo(_))
    }
}

/// Real-to-pseudo pair ratio within a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRatio {
    pub real: u32,
    pub pseudo: u32,
}

impl Default for BatchRatio {
    fn default() -> Self {
        Self { real: 1, pseudo: 1 }
    }
}

/// Manifest row describing an emitted pseudo pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoPairRecord {
    pub frame_id: u64,
    pub stage: PairStage,
    pub input_view_ids: Vec<String>,
    #[serde(with = "crate::grid::rle")]
    pub loss_mask: Mask,
    pub gt_sum: f64,
}

impl From<&PseudoPair> for PseudoPairRecord {
    fn from(p: &PseudoPair) -> Self {
        Self {
            frame_id: p.frame_id,
            stage: p.stage,
            input_view_ids: p.input_view_ids.clone(),
            loss_mask: p.loss_mask.clone(),
            gt_sum: p.gt_density.sum(),
        }
    }
}

/// Draws unselected views, avoiding repeats until the pool is exhausted.
struct UnselectedSampler {
    unselected: Vec<usize>,
    remaining: Vec<usize>,
}

impl UnselectedSampler {
    fn new(scene: &Scene, selected: &[usize]) -> Self {
        let unselected: Vec<usize> = scene
            .indices_by_id()
            .into_iter()
            .filter(|i| !selected.contains(i))
            .collect();
        Self {
            remaining: unselected.clone(),
            unselected,
        }
    }

    fn draw<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if n > self.unselected.len() {
            return Err(Error::InsufficientCandidates {
                needed: n,
                available: self.unselected.len(),
            });
        }
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.remaining.is_empty() {
                self.remaining = self.unselected.iter().copied().filter(|i| !out.contains(i)).collect();
            }
            let pick = rng.random_range(0..self.remaining.len());
            out.push(self.remaining.swap_remove(pick));
        }
        Ok(out)
    }
}

fn ids(scene: &Scene, indices: &[usize]) -> Vec<String> {
    indices.iter().map(|&i| scene.cameras[i].id.clone()).collect()
}

fn masked_gt(scene: &Scene, frame: &CrowdFrame, visible_under: &Mask, loss_mask: &Mask, sigma: f64) -> Result<DensityMap> {
    let persons = CrowdFrame {
        frame_id: frame.frame_id,
        persons: visible_persons(frame, visible_under, &scene.grid)?,
    };
    rasterize_density(&persons, &scene.grid, sigma, Some(loss_mask))
}

fn viewsel_pair<R: Rng + ?Sized>(
    state: &SelectionState,
    selected: &[usize],
    scene: &Scene,
    frame: &CrowdFrame,
    sampler: &mut UnselectedSampler,
    rng: &mut R,
    sigma: f64,
) -> Result<PseudoPair> {
    let extra = sampler.draw(1, rng).map_err(|_| Error::NoCandidates)?;
    let mut inputs = selected.to_vec();
    inputs.extend(extra);
    let loss_mask = state.combined_mask.clone();
    let gt_density = masked_gt(scene, frame, &loss_mask, &loss_mask, sigma)?;
    Ok(PseudoPair {
        frame_id: frame.frame_id,
        input_view_ids: ids(scene, &inputs),
        gt_density,
        loss_mask,
        stage: PairStage::ViewSel,
    })
}

fn modeltrain_pair<R: Rng + ?Sized>(
    state: &SelectionState,
    selected: &[usize],
    scene: &Scene,
    frame: &CrowdFrame,
    sampler: &mut UnselectedSampler,
    rng: &mut R,
    sigma: f64,
) -> Result<PseudoPair> {
    if selected.is_empty() {
        return Err(Error::config("selected", "at least one selected view is required"));
    }
    let k = selected.len();
    let unselected = sampler.draw(k - 1, rng)?;
    let anchor = selected[rng.random_range(0..k)];
    let mut inputs = vec![anchor];
    inputs.extend(unselected);
    let input_union = scene.visibility(&inputs);
    let loss_mask = state.combined_mask.and(&input_union)?;
    let gt_density = masked_gt(scene, frame, &state.combined_mask, &loss_mask, sigma)?;
    Ok(PseudoPair {
        frame_id: frame.frame_id,
        input_view_ids: ids(scene, &inputs),
        gt_density,
        loss_mask,
        stage: PairStage::ModelTrain,
    })
}

/// Selected views plus one random unselected view; ground truth covers the
/// persons seen by the selected views and the loss is masked by `H_v^k`.
pub fn make_viewsel_pair<R: Rng + ?Sized>(
    state: &SelectionState,
    scene: &Scene,
    frame: &CrowdFrame,
    rng: &mut R,
    kernel_sigma_cells: f64,
) -> Result<PseudoPair> {
    let selected = state.selected_indices(scene)?;
    let mut sampler = UnselectedSampler::new(scene, &selected);
    viewsel_pair(state, &selected, scene, frame, &mut sampler, rng, kernel_sigma_cells)
}

/// One random selected view plus K-1 random unselected views; the loss is
/// masked by `H_v^K` intersected with the inputs' combined footprint.
pub fn make_modeltrain_pair<R: Rng + ?Sized>(
    state: &SelectionState,
    scene: &Scene,
    frame: &CrowdFrame,
    rng: &mut R,
    kernel_sigma_cells: f64,
) -> Result<PseudoPair> {
    let selected = state.selected_indices(scene)?;
    let mut sampler = UnselectedSampler::new(scene, &selected);
    modeltrain_pair(state, &selected, scene, frame, &mut sampler, rng, kernel_sigma_cells)
}

/// Real pairs (one per frame) interleaved with pseudo pairs of `stage` at
/// `ratio`. Pseudo pairs that cannot be formed (too few unselected views)
/// are omitted.
pub fn make_training_batch<R: Rng + ?Sized>(
    state: &SelectionState,
    scene: &Scene,
    frames: &[CrowdFrame],
    rng: &mut R,
    ratio: BatchRatio,
    stage: PairStage,
    kernel_sigma_cells: f64,
) -> Result<Vec<TrainingPair>> {
    let selected = state.selected_indices(scene)?;
    let selected_ids = ids(scene, &selected);
    let real: Vec<RealPair> = frames
        .iter()
        .map(|frame| {
            Ok(RealPair {
                frame_id: frame.frame_id,
                input_view_ids: selected_ids.clone(),
                gt_density: masked_gt(scene, frame, &state.combined_mask, &state.combined_mask, kernel_sigma_cells)?,
            })
        })
        .collect::<Result<_>>()?;

    let n_pseudo = if ratio.real == 0 {
        0
    } else {
        (frames.len() * ratio.pseudo as usize).div_ceil(ratio.real as usize)
    };
    let mut sampler = UnselectedSampler::new(scene, &selected);
    let mut pseudo = Vec::with_capacity(n_pseudo);
    if !frames.is_empty() {
        let mut order: Vec<usize> = (0..frames.len()).collect();
        order.shuffle(rng);
        for j in 0..n_pseudo {
            let frame = &frames[order[j % frames.len()]];
            let pair = match stage {
                PairStage::ViewSel => viewsel_pair(state, &selected, scene, frame, &mut sampler, rng, kernel_sigma_cells),
                PairStage::ModelTrain => modeltrain_pair(state, &selected, scene, frame, &mut sampler, rng, kernel_sigma_cells),
            };
            match pair {
                Ok(p) => pseudo.push(p),
                Err(Error::NoCandidates | Error::InsufficientCandidates { .. }) => break,
                Err(e) => return Err(e),
            }
        }
    }

    // Interleave: after every `real` real pairs, emit `pseudo` pseudo pairs.
    let mut batch = Vec::with_capacity(real.len() + pseudo.len());
    let mut real_iter = real.into_iter().peekable();
    let mut pseudo_iter = pseudo.into_iter().peekable();
    let step_real = ratio.real.max(1) as usize;
    let step_pseudo = ratio.pseudo as usize;
    while real_iter.peek().is_some() || pseudo_iter.peek().is_some() {
        batch.extend(real_iter.by_ref().take(step_real).map(TrainingPair::Real));
        batch.extend(pseudo_iter.by_ref().take(step_pseudo.max(1)).map(TrainingPair::Pseudo));
    }
    Ok(batch)
}

/// Labeled and pseudo view-frame credit of a batch.
pub fn batch_credit(batch: &[TrainingPair]) -> (u64, u64) {
    batch.iter().fold((0, 0), |(real, pseudo), pair| {
        let n = pair.input_view_count() as u64;
        if pair.is_pseudo() {
            (real, pseudo + n)
        } else {
            (real + n, pseudo)
        }
    })
}
