//! Experiment specs, end-to-end strategy runs, evaluation, and sweeps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crowd::{cover_rate, generate_crowd_trace, load_trace, CrowdFrame, DensityMap, TraceGenParams};
use crate::error::{Error, Result};
use crate::export::{mask_to_field, write_pgm, write_svg};
use crate::geometry::Scene;
use crate::metrics::{
    counting_metrics, extract_peaks, localization_metrics, match_points, CountingReport, LocalizationReport,
    DEFAULT_MATCH_THRESHOLD_M, DEFAULT_NMS_RADIUS_CELLS, DEFAULT_PEAK_MIN_VALUE,
};
use crate::predictor::Predictor;
use crate::pseudo::{make_training_batch, PairStage, PseudoPairRecord, PseudoStages, TrainingPair};
use crate::scenegen::{generate_scene, SceneGenParams};
use crate::selection::{
    collect_frames, random_select, run_avs, run_ivs, run_random_active, select_frames, train_on_dataset, EpochRecord,
    LabeledDataset, RandomMode, SelectionConfig, SelectionState, Strategy,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneSource {
    Path(String),
    Generate(SceneGenParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    Path(String),
    Generate(TraceGenParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsParams {
    pub threshold_m: f64,
    pub peak_min_value: f64,
    pub nms_radius_cells: f64,
}

impl Default for MetricsParams {
    fn default() -> Self {
        Self {
            threshold_m: DEFAULT_MATCH_THRESHOLD_M,
            peak_min_value: DEFAULT_PEAK_MIN_VALUE,
            nms_radius_cells: DEFAULT_NMS_RADIUS_CELLS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scene: SceneSource,
    pub trace: TraceSource,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub predictor: Predictor,
    #[serde(default)]
    pub metrics: MetricsParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default = "one")]
    pub repeats: usize,
}

fn one() -> usize {
    1
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scene: SceneSource::Generate(SceneGenParams::default()),
            trace: TraceSource::Generate(TraceGenParams::default()),
            selection: SelectionConfig::default(),
            predictor: Predictor::default(),
            metrics: MetricsParams::default(),
            output_dir: None,
            repeats: 1,
        }
    }
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Hash of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("spec is serializable"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::config("repeats", "must be at least 1"));
        }
        if !(self.metrics.threshold_m > 0.0 && self.metrics.threshold_m.is_finite()) {
            return Err(Error::config("metrics.threshold_m", "must be positive"));
        }
        if self.metrics.nms_radius_cells.is_nan() || self.metrics.nms_radius_cells < 1.0 {
            return Err(Error::config("metrics.nms_radius_cells", "must be at least 1"));
        }
        self.predictor.validate()?;
        if let SceneSource::Generate(p) = &self.scene {
            p.validate()?;
        }
        Ok(())
    }

    /// Seeds of repeat `r` are shifted by `r`, so each repeat is a fresh
    /// draw of generated scene, trace, predictor noise, and selection rng.
    pub fn for_repeat(&self, repeat: usize) -> ExperimentSpec {
        let r = repeat as u64;
        let mut spec = self.clone();
        spec.selection.seed = spec.selection.seed.wrapping_add(r);
        if let Predictor::Noisy(cfg) = &mut spec.predictor {
            cfg.seed = cfg.seed.wrapping_add(r);
        }
        if let SceneSource::Generate(p) = &mut spec.scene {
            p.seed = p.seed.wrapping_add(r);
        }
        if let TraceSource::Generate(p) = &mut spec.trace {
            p.seed = p.seed.wrapping_add(r);
        }
        spec
    }

    /// Resolve relative paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut String| {
            if Path::new(p.as_str()).is_relative() {
                *p = base.join(&*p).to_string_lossy().into_owned();
            }
        };
        if let SceneSource::Path(p) = &mut self.scene {
            fix(p);
        }
        if let TraceSource::Path(p) = &mut self.trace {
            fix(p);
        }
    }

    pub fn load_scene(&self, id: &str) -> Result<Scene> {
        match &self.scene {
            SceneSource::Path(p) => Scene::load(p),
            SceneSource::Generate(params) => generate_scene(id, params),
        }
    }

    pub fn load_trace(&self, scene: &Scene) -> Result<Vec<CrowdFrame>> {
        let trace = match &self.trace {
            TraceSource::Path(p) => load_trace(p)?,
            TraceSource::Generate(t) => generate_crowd_trace(&scene.grid, t.n_frames, t.count_range, t.clustering, t.seed)?,
        };
        check_trace_fits(scene, &trace)?;
        Ok(trace)
    }
}

/// A trace belongs to a scene when every person lies on its grid.
pub fn check_trace_fits(scene: &Scene, trace: &[CrowdFrame]) -> Result<()> {
    let (lo, hi) = scene.grid.extent();
    let tol = 1e-9;
    for f in trace {
        for p in &f.persons {
            let [x, y] = p.position;
            if !(x >= lo[0] - tol && x <= hi[0] + tol && y >= lo[1] - tol && y <= hi[1] + tol) {
                return Err(Error::config(
                    "trace",
                    format!("frame {} has a person at ({x}, {y}) outside the scene extent", f.frame_id),
                ));
            }
        }
    }
    let mut ids: Vec<u64> = trace.iter().map(|f| f.frame_id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::config("trace", "duplicate frame ids"));
    }
    Ok(())
}

/// Named strategy presets used in comparisons and sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyPreset {
    Random,
    RandomPseudo,
    Ivs,
    AvsMask,
    AvsDensity,
}

impl StrategyPreset {
    pub const ALL: [StrategyPreset; 5] = [
        StrategyPreset::Random,
        StrategyPreset::RandomPseudo,
        StrategyPreset::Ivs,
        StrategyPreset::AvsMask,
        StrategyPreset::AvsDensity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyPreset::Random => "random",
            StrategyPreset::RandomPseudo => "random-pseudo",
            StrategyPreset::Ivs => "ivs",
            StrategyPreset::AvsMask => "avs-mask",
            StrategyPreset::AvsDensity => "avs-density",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config("strategy", format!("unknown strategy `{s}`")))
    }

    pub fn apply(self, config: &mut SelectionConfig) {
        let (strategy, mode, pseudo) = match self {
            StrategyPreset::Random => (Strategy::Random, RandomMode::AtOnce, PseudoStages::None),
            StrategyPreset::RandomPseudo => (Strategy::Random, RandomMode::OneByOne, PseudoStages::Both),
            StrategyPreset::Ivs => (Strategy::Geometric, config.random_mode, PseudoStages::ModelTrain),
            StrategyPreset::AvsMask => (Strategy::Mask, config.random_mode, PseudoStages::Both),
            StrategyPreset::AvsDensity => (Strategy::Density, config.random_mode, PseudoStages::Both),
        };
        config.strategy = strategy;
        config.random_mode = mode;
        config.pseudo = pseudo;
    }

    pub fn of(config: &SelectionConfig) -> &'static str {
        match (config.strategy, config.random_mode) {
            (Strategy::Random, RandomMode::AtOnce) => "random",
            (Strategy::Random, RandomMode::OneByOne) => "random-pseudo",
            (Strategy::Geometric, _) => "ivs",
            (Strategy::Mask, _) => "avs-mask",
            (Strategy::Density, _) => "avs-density",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub state: SelectionState,
    pub dataset: LabeledDataset,
    pub predictor: Predictor,
    pub converged: bool,
    pub epochs: Vec<EpochRecord>,
}

/// Dispatch on `config.strategy` (and `random_mode` for random):
/// random at once, random one-by-one in the active loop, IVS, or AVS.
/// Every branch ends with a trained predictor.
pub fn run_strategy(
    scene: &Scene,
    trace: &[CrowdFrame],
    config: &SelectionConfig,
    predictor: &Predictor,
) -> Result<StrategyOutcome> {
    match (config.strategy, config.random_mode) {
        (Strategy::Random, RandomMode::AtOnce) => {
            config.validate(scene, trace.len())?;
            let frame_ids = select_frames(scene, trace, predictor, config.n_frames)?;
            let state = random_select(scene, config.k_max, config.seed, RandomMode::AtOnce)?;
            let mut dataset = LabeledDataset::new(frame_ids);
            for id in &state.selected {
                dataset.label_view(id);
            }
            let trained = train_on_dataset(predictor, &state, scene, trace, &dataset, config)?;
            Ok(StrategyOutcome {
                state,
                dataset,
                predictor: trained,
                converged: true,
                epochs: Vec::new(),
            })
        }
        (Strategy::Random, RandomMode::OneByOne) => {
            let out = run_random_active(scene, trace, config, predictor)?;
            Ok(StrategyOutcome {
                state: out.state,
                dataset: out.dataset,
                predictor: out.predictor,
                converged: out.converged,
                epochs: out.epochs,
            })
        }
        (Strategy::Geometric, _) => {
            let (state, dataset) = run_ivs(scene, trace, config, predictor)?;
            let trained = train_on_dataset(predictor, &state, scene, trace, &dataset, config)?;
            Ok(StrategyOutcome {
                state,
                dataset,
                predictor: trained,
                converged: true,
                epochs: Vec::new(),
            })
        }
        (Strategy::Mask | Strategy::Density, _) => {
            let out = run_avs(scene, trace, config, predictor)?;
            Ok(StrategyOutcome {
                state: out.state,
                dataset: out.dataset,
                predictor: out.predictor,
                converged: out.converged,
                epochs: out.epochs,
            })
        }
    }
}

/// Manifest of one model-training batch for the final selection.
pub fn pseudo_manifest(
    scene: &Scene,
    trace: &[CrowdFrame],
    outcome: &StrategyOutcome,
    config: &SelectionConfig,
) -> Result<Vec<PseudoPairRecord>> {
    if !config.pseudo.includes(PairStage::ModelTrain) || outcome.state.is_empty() {
        return Ok(Vec::new());
    }
    let frames = collect_frames(trace, &outcome.dataset.frame_ids)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6d61_6e69);
    let batch = make_training_batch(
        &outcome.state,
        scene,
        &frames,
        &mut rng,
        config.pseudo_ratio,
        PairStage::ModelTrain,
        outcome.predictor.kernel_sigma_cells(),
    )?;
    Ok(batch
        .iter()
        .filter_map(|p| match p {
            TrainingPair::Pseudo(p) => Some(PseudoPairRecord::from(p)),
            TrainingPair::Real(_) => None,
        })
        .collect())
}

/// Output of one selection run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub spec_hash: String,
    pub spec: ExperimentSpec,
    pub repeat: usize,
    pub strategy: String,
    pub scene_id: String,
    pub state: SelectionState,
    pub dataset: LabeledDataset,
    pub predictor: Predictor,
    pub converged: bool,
    pub epochs: Vec<EpochRecord>,
    pub budget_images: usize,
    #[serde(default)]
    pub pseudo_pairs: Vec<PseudoPairRecord>,
}

pub fn scene_id_for(repeat: usize) -> String {
    format!("scene-r{repeat}")
}

/// Run the experiment's strategy for one repeat.
pub fn run_selection(spec: &ExperimentSpec, repeat: usize) -> Result<(RunOutput, Scene, Vec<CrowdFrame>)> {
    spec.validate()?;
    let effective = spec.for_repeat(repeat);
    let scene = effective.load_scene(&scene_id_for(repeat))?;
    let trace = effective.load_trace(&scene)?;
    let outcome = run_strategy(&scene, &trace, &effective.selection, &effective.predictor)?;
    let pseudo_pairs = pseudo_manifest(&scene, &trace, &outcome, &effective.selection)?;
    let out = RunOutput {
        spec_hash: spec.hash(),
        spec: spec.clone(),
        repeat,
        strategy: StrategyPreset::of(&effective.selection).to_string(),
        scene_id: scene.id.clone(),
        budget_images: outcome.dataset.budget_images(),
        state: outcome.state,
        dataset: outcome.dataset,
        predictor: outcome.predictor,
        converged: outcome.converged,
        epochs: outcome.epochs,
        pseudo_pairs,
    };
    Ok((out, scene, trace))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub spec_hash: String,
    pub scene_id: String,
    pub strategy: String,
    pub selected: Vec<String>,
    pub cover_rate: f64,
    pub counting: CountingReport,
    /// `None` when the trace has no persons at all.
    pub localization: Option<LocalizationReport>,
}

struct FrameEval {
    predicted: f64,
    gt: f64,
    distances: Vec<f64>,
    fp: usize,
    fn_: usize,
    gt_total: usize,
}

/// Evaluate a selection and trained predictor against scene-level ground
/// truth (all persons, whether or not any selected view sees them).
pub fn evaluate(
    scene: &Scene,
    trace: &[CrowdFrame],
    state: &SelectionState,
    predictor: &Predictor,
    metrics: &MetricsParams,
) -> Result<EvalReport> {
    if state.scene_id != scene.id {
        return Err(Error::config(
            "state.scene_id",
            format!("`{}` does not match scene `{}`", state.scene_id, scene.id),
        ));
    }
    if trace.is_empty() {
        return Err(Error::config("trace", "is empty"));
    }
    check_trace_fits(scene, trace)?;
    let indices = state.selected_indices(scene)?;
    let visibility = scene.visibility(&indices);
    let per_frame: Vec<FrameEval> = trace
        .par_iter()
        .map(|frame| {
            let pred: DensityMap = predictor.predict(frame, &visibility, scene)?;
            let peaks = extract_peaks(&pred, &scene.grid, metrics.peak_min_value, metrics.nms_radius_cells)?;
            let gt_points: Vec<[f64; 2]> = frame.persons.iter().map(|p| p.position).collect();
            let m = match_points(&peaks, &gt_points, metrics.threshold_m)?;
            Ok(FrameEval {
                predicted: pred.sum(),
                gt: frame.persons.len() as f64,
                distances: m.matches.iter().map(|x| x.distance).collect(),
                fp: m.fp(),
                fn_: m.fn_(),
                gt_total: gt_points.len(),
            })
        })
        .collect::<Result<_>>()?;

    let predicted: Vec<f64> = per_frame.iter().map(|f| f.predicted).collect();
    let gt: Vec<f64> = per_frame.iter().map(|f| f.gt).collect();
    let cr = cover_rate(trace, &visibility, &scene.grid).unwrap_or(0.0);
    let counting = counting_metrics(&predicted, &gt, cr)?;
    let gt_total: usize = per_frame.iter().map(|f| f.gt_total).sum();
    let localization = if gt_total == 0 {
        None
    } else {
        let distances: Vec<f64> = per_frame.iter().flat_map(|f| f.distances.iter().copied()).collect();
        let fp = per_frame.iter().map(|f| f.fp).sum();
        let fn_ = per_frame.iter().map(|f| f.fn_).sum();
        Some(localization_metrics(&distances, fp, fn_, gt_total, metrics.threshold_m)?)
    };
    Ok(EvalReport {
        spec_hash: String::new(),
        scene_id: scene.id.clone(),
        strategy: String::new(),
        selected: state.selected.clone(),
        cover_rate: cr,
        counting,
        localization,
    })
}

/// Evaluate a stored run, rebuilding its scene and trace from the embedded spec.
pub fn evaluate_run(run: &RunOutput) -> Result<EvalReport> {
    let effective = run.spec.for_repeat(run.repeat);
    let scene = effective.load_scene(&run.scene_id)?;
    let trace = effective.load_trace(&scene)?;
    let mut report = evaluate(&scene, &trace, &run.state, &run.predictor, &run.spec.metrics)?;
    report.spec_hash = run.spec_hash.clone();
    report.strategy = run.strategy.clone();
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    K,
    F,
    ScoreTerms,
    PseudoStages,
    Strategy,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::F => "f",
            SweepAxis::ScoreTerms => "score-terms",
            SweepAxis::PseudoStages => "pseudo-stages",
            SweepAxis::Strategy => "strategy",
        }
    }

    pub fn default_values(self) -> Vec<String> {
        let v: Vec<&str> = match self {
            SweepAxis::K => vec!["3", "5", "7", "9"],
            SweepAxis::F => vec!["5", "10", "20"],
            SweepAxis::ScoreTerms => vec!["sc", "sc-ad", "sc-vd", "all"],
            SweepAxis::PseudoStages => vec!["none", "view-sel", "model-train", "both"],
            SweepAxis::Strategy => StrategyPreset::ALL.iter().map(|p| p.name()).collect(),
        };
        v.into_iter().map(String::from).collect()
    }

    /// Spec with `value` applied along this axis.
    pub fn apply(self, spec: &ExperimentSpec, value: &str) -> Result<ExperimentSpec> {
        let mut out = spec.clone();
        let bad = |what: &str| Error::config(format!("sweep.{}", self.name()), format!("invalid {what} `{value}`"));
        match self {
            SweepAxis::K => out.selection.k_max = value.parse().map_err(|_| bad("K"))?,
            SweepAxis::F => out.selection.n_frames = value.parse().map_err(|_| bad("F"))?,
            SweepAxis::ScoreTerms => {
                out.selection.terms =
                    serde_json::from_value(serde_json::Value::String(value.into())).map_err(|_| bad("score terms"))?
            }
            SweepAxis::PseudoStages => {
                out.selection.pseudo =
                    serde_json::from_value(serde_json::Value::String(value.into())).map_err(|_| bad("pseudo stages"))?
            }
            SweepAxis::Strategy => StrategyPreset::parse(value)?.apply(&mut out.selection),
        }
        Ok(out)
    }
}

/// One sweep row: a configuration cell and repeat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub spec_hash: String,
    pub cell_hash: String,
    pub axis: String,
    pub value: String,
    pub repeat: usize,
    pub status: String,
    pub error: String,
    pub strategy: String,
    pub k: usize,
    pub f: usize,
    pub terms: String,
    pub pseudo: String,
    pub selected: String,
    pub converged: bool,
    pub budget_images: usize,
    pub cover_rate: Option<f64>,
    pub mae: Option<f64>,
    pub mse: Option<f64>,
    pub nae: Option<f64>,
    pub moda: Option<f64>,
    pub modp: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn enum_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

fn cell_hash(cell_spec: &ExperimentSpec, repeat: usize) -> String {
    sha256_hex(format!("{}:{repeat}", cell_spec.hash()).as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_heatmaps(dir: &Path, stem: &str, scene: &Scene, trace: &[CrowdFrame], run: &RunOutput) -> Result<()> {
    let coverage = mask_to_field(&run.state.combined_mask);
    let cs = scene.grid.cell_size_m;
    let markers: Vec<(String, [f64; 2])> = run
        .state
        .selected
        .iter()
        .filter_map(|id| scene.camera_index(id).ok())
        .map(|i| {
            let [x, y] = scene.cameras[i].ground_position();
            (
                scene.cameras[i].id.clone(),
                [(x - scene.grid.origin[0]) / cs, (y - scene.grid.origin[1]) / cs],
            )
        })
        .collect();
    let frames = collect_frames(trace, &run.dataset.frame_ids)?;
    let maps = frames
        .iter()
        .map(|f| run.predictor.predict(f, &run.state.combined_mask, scene))
        .collect::<Result<Vec<_>>>()?;
    let density = DensityMap::average(&maps, &scene.grid)?.into_field();

    let mut buf = Vec::new();
    for (name, field, svg) in [("coverage", &coverage, true), ("density", &density, true)] {
        buf.clear();
        write_pgm(field, &mut buf).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join(format!("{stem}-{name}.pgm")), &buf)?;
        if svg {
            buf.clear();
            write_svg(field, &markers, &mut buf).map_err(|e| Error::io(dir, e))?;
            write_atomic(&dir.join(format!("{stem}-{name}.svg")), &buf)?;
        }
    }
    Ok(())
}

fn run_cell(
    spec: &ExperimentSpec,
    cell_spec: &ExperimentSpec,
    axis: SweepAxis,
    value: &str,
    repeat: usize,
    heatmap_dir: Option<&Path>,
) -> SweepRow {
    let hash = cell_hash(cell_spec, repeat);
    let sel = &cell_spec.selection;
    let mut row = SweepRow {
        spec_hash: spec.hash(),
        cell_hash: hash.clone(),
        axis: axis.name().into(),
        value: value.into(),
        repeat,
        status: "ok".into(),
        error: String::new(),
        strategy: StrategyPreset::of(sel).into(),
        k: sel.k_max,
        f: sel.n_frames,
        terms: enum_name(&sel.terms),
        pseudo: enum_name(&sel.pseudo),
        selected: String::new(),
        converged: false,
        budget_images: 0,
        cover_rate: None,
        mae: None,
        mse: None,
        nae: None,
        moda: None,
        modp: None,
        precision: None,
        recall: None,
        f1: None,
    };
    let result = (|| -> Result<()> {
        let (run, scene, trace) = run_selection(cell_spec, repeat)?;
        let report = evaluate(&scene, &trace, &run.state, &run.predictor, &cell_spec.metrics)?;
        row.selected = run.state.selected.join(" ");
        row.converged = run.converged;
        row.budget_images = run.budget_images;
        row.cover_rate = Some(report.cover_rate);
        row.mae = Some(report.counting.mae);
        row.mse = Some(report.counting.mse);
        row.nae = Some(report.counting.nae);
        if let Some(l) = &report.localization {
            row.moda = Some(l.moda);
            row.modp = Some(l.modp);
            row.precision = Some(l.precision);
            row.recall = Some(l.recall);
            row.f1 = Some(l.f1);
        }
        if !run.converged {
            row.status = "not-converged".into();
        }
        if let Some(dir) = heatmap_dir {
            write_heatmaps(dir, &hash[..16], &scene, &trace, &run)?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.status = "error".into();
        row.error = e.to_string();
    }
    row
}

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    /// Write PGM/SVG heatmaps per cell.
    pub heatmaps: bool,
}

/// Summary of a sweep invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub computed: usize,
    pub skipped: usize,
    pub csv_path: PathBuf,
}

/// Run (or resume) a sweep into `out_dir`.
///
/// Each cell lands in `cells/<cell_hash>.json` via write-then-rename and is
/// appended to `index.jsonl`; cells whose file already exists are skipped.
/// `sweep.csv` is rebuilt from the cell files in axis-value and repeat
/// order, so it is identical however the work was interleaved.
pub fn run_sweep(
    spec: &ExperimentSpec,
    axis: SweepAxis,
    values: &[String],
    out_dir: &Path,
    options: &SweepOptions,
) -> Result<SweepSummary> {
    spec.validate()?;
    if values.is_empty() {
        return Err(Error::config("sweep.values", "at least one value is required"));
    }
    let cells_dir = out_dir.join("cells");
    let heat_dir = out_dir.join("heatmaps");
    fs::create_dir_all(&cells_dir).map_err(|e| Error::io(&cells_dir, e))?;
    if options.heatmaps {
        fs::create_dir_all(&heat_dir).map_err(|e| Error::io(&heat_dir, e))?;
    }

    let mut cells = Vec::new();
    for value in values {
        let cell_spec = axis.apply(spec, value)?;
        for repeat in 0..spec.repeats {
            cells.push((value.clone(), cell_spec.clone(), repeat));
        }
    }

    let rows: Vec<(SweepRow, bool)> = cells
        .par_iter()
        .map(|(value, cell_spec, repeat)| {
            let hash = cell_hash(cell_spec, *repeat);
            let path = cells_dir.join(format!("{hash}.json"));
            if let Ok(text) = fs::read_to_string(&path) {
                if let Ok(row) = serde_json::from_str::<SweepRow>(&text) {
                    return Ok((row, false));
                }
            }
            let heat = options.heatmaps.then_some(heat_dir.as_path());
            let row = run_cell(spec, cell_spec, axis, value, *repeat, heat);
            let mut text = serde_json::to_string_pretty(&row)?;
            text.push('\n');
            write_atomic(&path, text.as_bytes())?;
            Ok((row, true))
        })
        .collect::<Result<_>>()?;

    // Index lines are appended in cell order, not completion order.
    let index_path = out_dir.join("index.jsonl");
    let mut index = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&index_path)
        .map_err(|e| Error::io(&index_path, e))?;
    for (row, fresh) in &rows {
        if *fresh {
            let line = serde_json::to_string(&serde_json::json!({
                "cell_hash": row.cell_hash,
                "value": row.value,
                "repeat": row.repeat,
                "status": row.status,
            }))?;
            writeln!(index, "{line}").map_err(|e| Error::io(&index_path, e))?;
        }
    }
    let computed = rows.iter().filter(|(_, fresh)| *fresh).count();
    let rows: Vec<SweepRow> = rows.into_iter().map(|(r, _)| r).collect();

    let csv_path = out_dir.join("sweep.csv");
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::io(&csv_path, e.into_error()))?;
    write_atomic(&csv_path, &bytes)?;
    Ok(SweepSummary {
        skipped: rows.len() - computed,
        computed,
        rows,
        csv_path,
    })
}
