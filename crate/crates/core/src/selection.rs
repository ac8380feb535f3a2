//! Frame selection, view initialization, greedy view addition, and the
//! independent / active selection pipelines.
//!
//! Ties are always broken towards the smallest camera id (string order) or
//! the smallest frame id, so every run is reproducible.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crowd::{cover_rate, CrowdFrame, DensityMap};
use crate::error::{Error, Result};
use crate::geometry::Scene;
use crate::grid::Mask;
use crate::predictor::{training_mae, Predictor};
use crate::pseudo::{batch_credit, make_training_batch, BatchRatio, PairStage, PseudoStages};
use crate::scoring::{
    score_density, score_geometric, score_mask, ScoreBreakdown, ScoreParams, ScoreTerms, ScoreVariant,
};

/// Subsets enumerated by [`brute_force_best`] before it refuses.
pub const DEFAULT_BRUTE_FORCE_BUDGET: u128 = 50_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub added_id: String,
    /// `None` for the initial view, which is not chosen by a score.
    pub score: Option<ScoreBreakdown>,
}

/// Ordered selected-view group with its cached combined footprint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionState {
    pub scene_id: String,
    pub selected: Vec<String>,
    #[serde(with = "crate::grid::rle")]
    pub combined_mask: Mask,
    pub history: Vec<HistoryEntry>,
}

impl SelectionState {
    pub fn empty(scene: &Scene) -> Self {
        Self {
            scene_id: scene.id.clone(),
            selected: Vec::new(),
            combined_mask: scene.grid.mask(false),
            history: Vec::new(),
        }
    }

    pub fn with_first(scene: &Scene, first: usize) -> Self {
        let mut state = Self::empty(scene);
        state.push(scene, first, None);
        state
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    fn push(&mut self, scene: &Scene, index: usize, score: Option<ScoreBreakdown>) {
        let id = scene.cameras[index].id.clone();
        debug_assert!(!self.selected.contains(&id));
        self.combined_mask
            .or_assign(&scene.footprints[index].mask)
            .expect("footprints share the scene grid");
        self.selected.push(id.clone());
        self.history.push(HistoryEntry { added_id: id, score });
    }

    pub fn selected_indices(&self, scene: &Scene) -> Result<Vec<usize>> {
        self.selected.iter().map(|id| scene.camera_index(id)).collect()
    }

    /// Checks no duplicates, the cached mask, and the history length.
    pub fn validate(&self, scene: &Scene) -> Result<()> {
        let indices = self.selected_indices(scene)?;
        let mut seen = indices.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != indices.len() {
            return Err(Error::config("selected", "contains duplicates"));
        }
        if scene.visibility(&indices) != self.combined_mask {
            return Err(Error::config("combined_mask", "does not match the selected footprints"));
        }
        if self.history.len() != self.selected.len() {
            return Err(Error::config("history", "one entry per selected view is required"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Geometric,
    Mask,
    Density,
    Random,
}

impl Strategy {
    pub fn variant(self) -> Option<ScoreVariant> {
        match self {
            Strategy::Geometric => Some(ScoreVariant::Geometric),
            Strategy::Mask => Some(ScoreVariant::Mask),
            Strategy::Density => Some(ScoreVariant::Density),
            Strategy::Random => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomMode {
    #[default]
    AtOnce,
    OneByOne,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstViewMode {
    LargestFov,
    LargestPredictedCount,
}

/// Which view set the prediction `M_k` is computed from when scoring a
/// candidate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionScope {
    /// Run the model on the selected views only; the candidate enters the
    /// score through its footprint and distances alone.
    #[default]
    CurrentSelection,
    /// Run the model on the selected views plus the candidate (inference
    /// needs no labels for the candidate).
    WithCandidate,
}

/// Missing fields take their [`Default`] values when deserialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Views to select (K).
    pub k_max: usize,
    /// Frames to label (F).
    pub n_frames: usize,
    pub strategy: Strategy,
    /// Training gate: a view is added once the training MAE is at most tau.
    /// `None` disables the gate.
    pub tau: Option<f64>,
    pub score: ScoreParams,
    pub seed: u64,
    pub terms: ScoreTerms,
    pub random_mode: RandomMode,
    pub pseudo: PseudoStages,
    pub pseudo_ratio: BatchRatio,
    /// Maximum training epochs of the active loop (E).
    pub selection_epochs: usize,
    /// The gate is checked once every this many epochs.
    pub epochs_per_check: usize,
    /// Epochs of training on the final labeled set.
    pub final_epochs: usize,
    pub prediction_scope: PredictionScope,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            k_max: 5,
            n_frames: 20,
            strategy: Strategy::Density,
            tau: Some(4.0),
            score: ScoreParams::default(),
            seed: 0,
            terms: ScoreTerms::All,
            random_mode: RandomMode::AtOnce,
            pseudo: PseudoStages::Both,
            pseudo_ratio: BatchRatio::default(),
            selection_epochs: 100,
            epochs_per_check: 1,
            final_epochs: 3,
            prediction_scope: PredictionScope::CurrentSelection,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self, scene: &Scene, trace_len: usize) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::config("selection.k_max", "must be at least 1"));
        }
        if self.k_max > scene.n_cameras() {
            return Err(Error::config(
                "selection.k_max",
                format!("{} exceeds the {} candidate cameras", self.k_max, scene.n_cameras()),
            ));
        }
        if self.n_frames == 0 {
            return Err(Error::config("selection.n_frames", "must be at least 1"));
        }
        if self.n_frames > trace_len {
            return Err(Error::config(
                "selection.n_frames",
                format!("{} exceeds the trace length {trace_len}", self.n_frames),
            ));
        }
        if let Some(t) = self.tau {
            if t.is_nan() {
                return Err(Error::config("selection.tau", "must be a number"));
            }
        }
        if self.epochs_per_check == 0 {
            return Err(Error::config("selection.epochs_per_check", "must be at least 1"));
        }
        if self.pseudo_ratio.real == 0 {
            return Err(Error::config("selection.pseudo_ratio.real", "must be at least 1"));
        }
        self.score.validate()
    }

    fn gate_passes(&self, metric: f64) -> bool {
        self.tau.is_none_or(|t| metric <= t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledView {
    pub frame_id: u64,
    pub camera_id: String,
}

/// Selected frames x selected views available as supervised data.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub frame_ids: Vec<u64>,
    pub entries: Vec<LabeledView>,
    /// Paths of exported ground-truth rasters, keyed by frame id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub gt_paths: BTreeMap<u64, String>,
}

impl LabeledDataset {
    pub fn new(frame_ids: Vec<u64>) -> Self {
        Self {
            frame_ids,
            ..Default::default()
        }
    }

    pub fn label_view(&mut self, camera_id: &str) {
        for &frame_id in &self.frame_ids {
            self.entries.push(LabeledView {
                frame_id,
                camera_id: camera_id.to_string(),
            });
        }
    }

    /// Labeled images (F * K on normal termination).
    pub fn budget_images(&self) -> usize {
        self.entries.len()
    }
}

/// Index of the largest footprint; ties go to the smallest id.
pub fn largest_fov(scene: &Scene) -> Result<usize> {
    argmax_by_id(scene.indices_by_id(), |i| scene.footprints[i].area_cells as f64)
        .ok_or_else(|| Error::config("scene.cameras", "scene has no cameras"))
}

fn argmax_by_id(order: Vec<usize>, mut value: impl FnMut(usize) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in order {
        let v = value(i);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

fn frames_by_id<'a>(trace: &'a [CrowdFrame], ids: &[u64]) -> Result<Vec<&'a CrowdFrame>> {
    ids.iter()
        .map(|&id| trace.iter().find(|f| f.frame_id == id).ok_or(Error::UnknownFrame(id)))
        .collect()
}

/// Clones of the frames with the given ids, in `ids` order.
pub fn collect_frames(trace: &[CrowdFrame], ids: &[u64]) -> Result<Vec<CrowdFrame>> {
    Ok(frames_by_id(trace, ids)?.into_iter().cloned().collect())
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Choose `f` frames to label.
///
/// The first frame has the largest predicted count inside the largest
/// footprint `v_max`; each further frame minimizes its maximum cosine
/// similarity to the frames already chosen, comparing predicted densities
/// restricted to `v_max`. A zero feature vector counts as similarity 1.
pub fn select_frames(scene: &Scene, trace: &[CrowdFrame], predictor: &Predictor, f: usize) -> Result<Vec<u64>> {
    if trace.is_empty() {
        return Err(Error::config("trace", "is empty"));
    }
    if f == 0 || f > trace.len() {
        return Err(Error::config(
            "n_frames",
            format!("must lie in 1..={}, got {f}", trace.len()),
        ));
    }
    let v_max = largest_fov(scene)?;
    let footprint = &scene.footprints[v_max].mask;
    let cells: Vec<usize> = footprint.true_indices().collect();

    let mut order: Vec<usize> = (0..trace.len()).collect();
    order.sort_by_key(|&i| trace[i].frame_id);
    let features: Vec<Vec<f64>> = order
        .par_iter()
        .map(|&i| {
            let pred = predictor.predict(&trace[i], footprint, scene)?;
            Ok(cells.iter().map(|&c| pred.values().data()[c]).collect())
        })
        .collect::<Result<_>>()?;
    let counts: Vec<f64> = features.iter().map(|v| v.iter().sum()).collect();

    let mut chosen: Vec<usize> = Vec::with_capacity(f);
    let mut first = 0;
    for (pos, &c) in counts.iter().enumerate() {
        if c > counts[first] {
            first = pos;
        }
    }
    chosen.push(first);

    while chosen.len() < f {
        let mut best: Option<(usize, f64)> = None;
        for pos in 0..order.len() {
            if chosen.contains(&pos) {
                continue;
            }
            let max_sim = chosen
                .iter()
                .map(|&s| cosine(&features[pos], &features[s]).unwrap_or(1.0))
                .fold(f64::NEG_INFINITY, f64::max);
            if best.is_none_or(|(_, b)| max_sim < b) {
                best = Some((pos, max_sim));
            }
        }
        chosen.push(best.expect("f <= trace length").0);
    }
    Ok(chosen.into_iter().map(|pos| trace[order[pos]].frame_id).collect())
}

/// First view: largest footprint, or largest predicted count summed over
/// the selected frames.
pub fn select_first_view(
    scene: &Scene,
    frames: &[CrowdFrame],
    predictor: &Predictor,
    mode: FirstViewMode,
) -> Result<usize> {
    match mode {
        FirstViewMode::LargestFov => largest_fov(scene),
        FirstViewMode::LargestPredictedCount => {
            let counts: Vec<f64> = (0..scene.n_cameras())
                .into_par_iter()
                .map(|i| {
                    frames
                        .iter()
                        .map(|f| Ok(predictor.predict(f, &scene.footprints[i].mask, scene)?.sum()))
                        .sum::<Result<f64>>()
                })
                .collect::<Result<_>>()?;
            argmax_by_id(scene.indices_by_id(), |i| counts[i])
                .ok_or_else(|| Error::config("scene.cameras", "scene has no cameras"))
        }
    }
}

/// How candidates are scored during view addition.
#[derive(Clone, Copy, Debug)]
pub struct ViewScorer<'a> {
    pub variant: ScoreVariant,
    pub terms: ScoreTerms,
    pub params: ScoreParams,
    pub scope: PredictionScope,
    /// Frames whose predictions are averaged into `M_k`.
    pub frames: &'a [CrowdFrame],
    pub predictor: Option<&'a Predictor>,
}

impl<'a> ViewScorer<'a> {
    pub fn geometric(params: ScoreParams, terms: ScoreTerms) -> Self {
        Self {
            variant: ScoreVariant::Geometric,
            terms,
            params,
            scope: PredictionScope::default(),
            frames: &[],
            predictor: None,
        }
    }

    pub fn active(
        variant: ScoreVariant,
        terms: ScoreTerms,
        params: ScoreParams,
        scope: PredictionScope,
        frames: &'a [CrowdFrame],
        predictor: &'a Predictor,
    ) -> Self {
        Self {
            variant,
            terms,
            params,
            scope,
            frames,
            predictor: Some(predictor),
        }
    }

    /// Frame-averaged prediction for the views whose union is `visibility`.
    pub fn aggregate_prediction(&self, scene: &Scene, visibility: &Mask) -> Result<DensityMap> {
        let predictor = self
            .predictor
            .ok_or_else(|| Error::config("predictor", "required for prediction-driven scores"))?;
        let maps = self
            .frames
            .par_iter()
            .map(|f| predictor.predict(f, visibility, scene))
            .collect::<Result<Vec<_>>>()?;
        DensityMap::average(&maps, &scene.grid)
    }

    /// Score of `views` (selected plus one candidate) given the prediction.
    pub fn score_with(&self, scene: &Scene, views: &[usize], prediction: Option<&DensityMap>) -> Result<ScoreBreakdown> {
        match self.variant {
            ScoreVariant::Geometric => score_geometric(views, scene, &self.params),
            ScoreVariant::Mask => score_mask(views, scene, need(prediction)?, &self.params),
            ScoreVariant::Density => score_density(views, scene, need(prediction)?, &self.params),
        }
    }
}

fn need(prediction: Option<&DensityMap>) -> Result<&DensityMap> {
    prediction.ok_or_else(|| Error::config("predictor", "required for prediction-driven scores"))
}

/// Add the unselected view maximizing the score of `selected + v`.
pub fn add_view(scene: &Scene, state: &SelectionState, scorer: &ViewScorer<'_>) -> Result<SelectionState> {
    let selected = state.selected_indices(scene)?;
    let candidates: Vec<usize> = scene
        .indices_by_id()
        .into_iter()
        .filter(|i| !selected.contains(i))
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }

    let shared_prediction = match (scorer.variant, scorer.scope) {
        (ScoreVariant::Geometric, _) | (_, PredictionScope::WithCandidate) => None,
        (_, PredictionScope::CurrentSelection) => Some(scorer.aggregate_prediction(scene, &state.combined_mask)?),
    };

    let scores: Vec<ScoreBreakdown> = candidates
        .par_iter()
        .map(|&v| {
            let mut views = selected.clone();
            views.push(v);
            match (scorer.variant, &shared_prediction) {
                (ScoreVariant::Geometric, _) => scorer.score_with(scene, &views, None),
                (_, Some(p)) => scorer.score_with(scene, &views, Some(p)),
                (_, None) => {
                    let vis = state.combined_mask.or(&scene.footprints[v].mask)?;
                    let p = scorer.aggregate_prediction(scene, &vis)?;
                    scorer.score_with(scene, &views, Some(&p))
                }
            }
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (pos, s) in scores.iter().enumerate() {
        let v = s.objective(scorer.terms);
        if v > best_value {
            best = pos;
            best_value = v;
        }
    }
    let mut next = state.clone();
    next.push(scene, candidates[best], Some(scores[best].clone()));
    Ok(next)
}

/// Independent view selection: frames, largest-FOV first view, then greedy
/// geometric additions up to K. No model is consulted after frame selection.
pub fn run_ivs(
    scene: &Scene,
    trace: &[CrowdFrame],
    config: &SelectionConfig,
    predictor: &Predictor,
) -> Result<(SelectionState, LabeledDataset)> {
    config.validate(scene, trace.len())?;
    let frame_ids = select_frames(scene, trace, predictor, config.n_frames)?;
    let first = select_first_view(scene, &[], predictor, FirstViewMode::LargestFov)?;
    let mut state = SelectionState::with_first(scene, first);
    let scorer = ViewScorer::geometric(config.score, config.terms);
    while state.len() < config.k_max {
        state = add_view(scene, &state, &scorer)?;
    }
    let mut dataset = LabeledDataset::new(frame_ids);
    for id in &state.selected {
        dataset.label_view(id);
    }
    Ok((state, dataset))
}

/// One epoch of the active loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub training_mae: f64,
    pub quality: f64,
    pub selected_before: usize,
    pub added: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveOutcome {
    pub state: SelectionState,
    pub dataset: LabeledDataset,
    pub predictor: Predictor,
    /// False when the gate never let the selection reach K within the epoch
    /// budget; the state is then partial.
    pub converged: bool,
    pub epochs: Vec<EpochRecord>,
}

enum Adder<'a> {
    Scored(ScoreVariant, &'a SelectionConfig),
    Random(Box<ChaCha8Rng>),
}

enum FirstPick {
    Mode(FirstViewMode),
    Fixed(usize),
}

fn random_addition(scene: &Scene, state: &SelectionState, rng: &mut ChaCha8Rng) -> Result<SelectionState> {
    let selected = state.selected_indices(scene)?;
    let candidates: Vec<usize> = scene
        .indices_by_id()
        .into_iter()
        .filter(|i| !selected.contains(i))
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let pick = candidates[rng.random_range(0..candidates.len())];
    let mut next = state.clone();
    next.push(scene, pick, None);
    Ok(next)
}

fn batch_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// One simulated training epoch on the current labeled data plus the
/// configured pseudo pairs of `stage`.
pub fn train_epoch<R: Rng + ?Sized>(
    predictor: &Predictor,
    state: &SelectionState,
    scene: &Scene,
    frames: &[CrowdFrame],
    config: &SelectionConfig,
    stage: PairStage,
    rng: &mut R,
) -> Result<Predictor> {
    let ratio = if config.pseudo.includes(stage) {
        config.pseudo_ratio
    } else {
        BatchRatio { real: 1, pseudo: 0 }
    };
    let batch = make_training_batch(state, scene, frames, rng, ratio, stage, predictor.kernel_sigma_cells())?;
    let (real, pseudo) = batch_credit(&batch);
    Ok(predictor.calibrate(real, pseudo))
}

/// Train on the final labeled set for `config.final_epochs` epochs.
pub fn train_on_dataset(
    predictor: &Predictor,
    state: &SelectionState,
    scene: &Scene,
    trace: &[CrowdFrame],
    dataset: &LabeledDataset,
    config: &SelectionConfig,
) -> Result<Predictor> {
    let frames = collect_frames(trace, &dataset.frame_ids)?;
    let mut rng = batch_rng(config.seed, 0xf1_7a1);
    let mut model = predictor.clone();
    for _ in 0..config.final_epochs {
        model = train_epoch(&model, state, scene, &frames, config, PairStage::ModelTrain, &mut rng)?;
    }
    Ok(model)
}

fn run_active_loop(
    scene: &Scene,
    trace: &[CrowdFrame],
    config: &SelectionConfig,
    predictor: &Predictor,
    mut adder: Adder<'_>,
    first_pick: FirstPick,
) -> Result<ActiveOutcome> {
    config.validate(scene, trace.len())?;
    predictor.validate()?;
    let frame_ids = select_frames(scene, trace, predictor, config.n_frames)?;
    let frames = collect_frames(trace, &frame_ids)?;
    let first = match first_pick {
        FirstPick::Mode(mode) => select_first_view(scene, &frames, predictor, mode)?,
        FirstPick::Fixed(i) => i,
    };

    let mut state = SelectionState::with_first(scene, first);
    let mut dataset = LabeledDataset::new(frame_ids);
    dataset.label_view(&state.selected[0]);
    let mut model = predictor.clone();
    let mut rng = batch_rng(config.seed, 0xa5_e1);
    let mut epochs = Vec::new();

    for epoch in 1..=config.selection_epochs {
        if state.len() >= config.k_max {
            break;
        }
        model = train_epoch(&model, &state, scene, &frames, config, PairStage::ViewSel, &mut rng)?;
        if epoch % config.epochs_per_check != 0 {
            continue;
        }
        let metric = training_mae(&model, scene, &frames, &state.combined_mask)?;
        let selected_before = state.len();
        let mut added = None;
        if config.gate_passes(metric) && state.len() < config.k_max {
            state = match &mut adder {
                Adder::Scored(variant, cfg) => {
                    let scorer = ViewScorer::active(*variant, cfg.terms, cfg.score, cfg.prediction_scope, &frames, &model);
                    add_view(scene, &state, &scorer)?
                }
                Adder::Random(r) => random_addition(scene, &state, r)?,
            };
            let id = state.selected.last().expect("just added").clone();
            dataset.label_view(&id);
            added = Some(id);
        }
        epochs.push(EpochRecord {
            epoch,
            training_mae: metric,
            quality: model.quality(),
            selected_before,
            added,
        });
    }

    let converged = state.len() >= config.k_max;
    let mut final_rng = batch_rng(config.seed, 0xf1_7a1);
    for _ in 0..config.final_epochs {
        model = train_epoch(&model, &state, scene, &frames, config, PairStage::ModelTrain, &mut final_rng)?;
    }
    Ok(ActiveOutcome {
        state,
        dataset,
        predictor: model,
        converged,
        epochs,
    })
}

/// Active view selection: the model is trained each epoch on the views
/// labeled so far, and once its training MAE passes the gate the next view
/// is chosen with the prediction-driven score.
pub fn run_avs(scene: &Scene, trace: &[CrowdFrame], config: &SelectionConfig, predictor: &Predictor) -> Result<ActiveOutcome> {
    let variant = match config.strategy {
        Strategy::Mask => ScoreVariant::Mask,
        Strategy::Density => ScoreVariant::Density,
        other => {
            return Err(Error::config(
                "selection.strategy",
                format!("active selection needs mask or density, got {other:?}"),
            ))
        }
    };
    run_active_loop(
        scene,
        trace,
        config,
        predictor,
        Adder::Scored(variant, config),
        FirstPick::Mode(FirstViewMode::LargestPredictedCount),
    )
}

/// Random (Pseudo): a random first view, then one random view per passing
/// epoch, trained exactly like the active loop.
pub fn run_random_active(
    scene: &Scene,
    trace: &[CrowdFrame],
    config: &SelectionConfig,
    predictor: &Predictor,
) -> Result<ActiveOutcome> {
    let mut rng = batch_rng(config.seed, 0x7a_d0);
    let order = scene.indices_by_id();
    let first = *order.get(rng.random_range(0..order.len().max(1))).ok_or(Error::NoCandidates)?;
    run_active_loop(scene, trace, config, predictor, Adder::Random(Box::new(rng)), FirstPick::Fixed(first))
}

/// Uniform sample of `k` views without replacement.
pub fn random_select(scene: &Scene, k: usize, seed: u64, mode: RandomMode) -> Result<SelectionState> {
    let n = scene.n_cameras();
    if k > n {
        return Err(Error::InsufficientCandidates { needed: k, available: n });
    }
    let order = scene.indices_by_id();
    let mut rng = batch_rng(seed, 0x7a_d0);
    let mut state = SelectionState::empty(scene);
    match mode {
        RandomMode::AtOnce => {
            for pos in sample(&mut rng, n, k) {
                state.push(scene, order[pos], None);
            }
        }
        RandomMode::OneByOne => {
            let mut remaining = order;
            for _ in 0..k {
                let pick = remaining.remove(rng.random_range(0..remaining.len()));
                state.push(scene, pick, None);
            }
        }
    }
    Ok(state)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BruteForceObjective {
    CoverRate,
    GeometricScore,
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Exhaustive best k-subset. Subsets are enumerated in lexicographic order
/// of camera ids and only a strictly better value replaces the incumbent.
pub fn brute_force_best(
    scene: &Scene,
    trace: &[CrowdFrame],
    k: usize,
    objective: BruteForceObjective,
    params: &ScoreParams,
    budget: u128,
) -> Result<(Vec<String>, f64)> {
    let n = scene.n_cameras();
    if k == 0 || k > n {
        return Err(Error::config("k", format!("must lie in 1..={n}")));
    }
    let subsets = binomial(n, k);
    if subsets > budget {
        return Err(Error::BudgetExceeded { subsets, budget });
    }
    let order = scene.indices_by_id();
    let mut combo: Vec<usize> = (0..k).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let views: Vec<usize> = combo.iter().map(|&p| order[p]).collect();
        let value = match objective {
            BruteForceObjective::CoverRate => cover_rate(trace, &scene.visibility(&views), &scene.grid)?,
            BruteForceObjective::GeometricScore => score_geometric(&views, scene, params)?.total,
        };
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((views, value));
        }
        // Next combination in lexicographic order.
        let mut i = k;
        while i > 0 && combo[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        combo[i - 1] += 1;
        for j in i..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
    let (views, value) = best.expect("at least one subset");
    Ok((views.iter().map(|&i| scene.cameras[i].id.clone()).collect(), value))
}
