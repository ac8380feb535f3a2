//! `viewsel`: scene generation, selection runs, evaluation, and sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use viewsel_core::crowd::{generate_crowd_trace, load_trace, rasterize_density, write_trace_csv, TraceGenParams};
use viewsel_core::experiment::{
    evaluate, run_selection, run_sweep, scene_id_for, sha256_hex, EvalReport, ExperimentSpec, RunOutput,
    StrategyPreset, SweepAxis, SweepOptions,
};
use viewsel_core::export::write_npy;
use viewsel_core::geometry::SceneConfig;
use viewsel_core::scenegen::{generate_scene, SceneGenParams};
use viewsel_core::selection::collect_frames;
use viewsel_core::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_IO: u8 = 4;

const OUT_DIR_ENV: &str = "VIEWSEL_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "viewsel-out";

#[derive(Parser)]
#[command(name = "viewsel", version, about = "Camera view selection for multi-view crowd counting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene and crowd trace.
    SceneGen(SceneGenArgs),
    /// Run a selection strategy end to end.
    Select(SelectArgs),
    /// Evaluate a stored run against scene-level ground truth.
    Eval(EvalArgs),
    /// Sweep one axis of a spec and tabulate results.
    Sweep(SweepArgs),
    /// Check a spec, scene, or trace file.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SceneGenArgs {
    /// JSON file with `scene` and/or `trace` generator parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    cameras: Option<usize>,
    /// Grid size as HxW cells, e.g. 80x80.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    #[arg(long)]
    cell_size: Option<f64>,
    #[arg(long)]
    frames: Option<usize>,
    /// Per-frame person count range as LO-HI.
    #[arg(long, value_parser = parse_range)]
    persons: Option<(usize, usize)>,
    #[arg(long)]
    clustering: Option<f64>,
    /// Seed for the scene; the trace uses seed + 1 unless set in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "scene")]
    id: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    /// Experiment spec JSON.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Strategy preset: random, random-pseudo, ivs, avs-mask, avs-density.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Which repeat of the experiment to run.
    #[arg(long, default_value_t = 0)]
    repeat: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// `run.json` written by `select`.
    #[arg(long)]
    run: PathBuf,
    /// Evaluate with this spec instead of the embedded one.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Accept a spec whose hash differs from the run's.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    spec: PathBuf,
    /// k, f, score-terms, pseudo-stages, or strategy.
    #[arg(long)]
    axis: String,
    /// Comma-separated values; defaults depend on the axis.
    #[arg(long, value_delimiter = ',')]
    values: Vec<String>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    no_heatmaps: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// File to check. `.csv` is read as a trace; JSON as a spec when it has
    /// a `selection` key, otherwise as a scene.
    path: PathBuf,
}

enum Failure {
    Lib(Error),
    NotConverged,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Lib(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or("expected HxW")?;
    Ok((
        h.trim().parse().map_err(|_| format!("bad height `{h}`"))?,
        w.trim().parse().map_err(|_| format!("bad width `{w}`"))?,
    ))
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('-').ok_or("expected LO-HI")?;
    Ok((
        a.trim().parse().map_err(|_| format!("bad lower bound `{a}`"))?,
        b.trim().parse().map_err(|_| format!("bad upper bound `{b}`"))?,
    ))
}

/// Flag, then spec, then environment, then a fixed fallback.
fn out_dir(flag: Option<&Path>, spec_dir: Option<&str>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = spec_dir {
        return PathBuf::from(p);
    }
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn create_dir(path: &Path) -> Result<(), Error> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn read_json_value(path: &Path) -> Result<serde_json::Value, Error> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_spec(path: &Path) -> Result<ExperimentSpec, Error> {
    let mut spec = ExperimentSpec::load(path)?;
    if let Some(dir) = path.parent() {
        spec.resolve_paths(dir);
    }
    spec.validate()?;
    Ok(spec)
}

fn enum_from_str<T: serde::de::DeserializeOwned>(field: &str, value: &str) -> Result<T, Error> {
    serde_json::from_value(serde_json::Value::String(value.into())).map_err(|_| Error::InvalidConfig {
        field: field.into(),
        reason: format!("unknown value `{value}`"),
    })
}

#[derive(Serialize)]
struct SceneGenSpec {
    scene: SceneGenParams,
    trace: TraceGenParams,
}

fn cmd_scene_gen(args: SceneGenArgs) -> CmdResult {
    let (mut scene_p, mut trace_p, trace_seed_set) = match &args.config {
        Some(path) => {
            let v = read_json_value(path)?;
            let scene_p: SceneGenParams = match v.get("scene") {
                Some(s) => serde_json::from_value(s.clone())?,
                None => SceneGenParams::default(),
            };
            let trace_seed_set = v.get("trace").and_then(|t| t.get("seed")).is_some();
            let trace_p: TraceGenParams = match v.get("trace") {
                Some(t) => serde_json::from_value(t.clone())?,
                None => TraceGenParams::default(),
            };
            (scene_p, trace_p, trace_seed_set)
        }
        None => (SceneGenParams::default(), TraceGenParams::default(), false),
    };
    if let Some(n) = args.cameras {
        scene_p.n_cameras = n;
    }
    if let Some((h, w)) = args.grid {
        scene_p.grid_h = h;
        scene_p.grid_w = w;
    }
    if let Some(cs) = args.cell_size {
        scene_p.cell_size_m = cs;
    }
    if let Some(seed) = args.seed {
        scene_p.seed = seed;
    }
    if !trace_seed_set {
        trace_p.seed = scene_p.seed.wrapping_add(1);
    }
    if let Some(n) = args.frames {
        trace_p.n_frames = n;
    }
    if let Some(r) = args.persons {
        trace_p.count_range = r;
    }
    if let Some(c) = args.clustering {
        trace_p.clustering = c;
    }

    let gen_spec = SceneGenSpec {
        scene: scene_p,
        trace: trace_p,
    };
    let hash = sha256_hex(&serde_json::to_vec(&gen_spec)?);
    let scene = generate_scene(args.id.as_str(), &gen_spec.scene)?;
    let t = &gen_spec.trace;
    let trace = generate_crowd_trace(&scene.grid, t.n_frames, t.count_range, t.clustering, t.seed)?;

    let dir = out_dir(args.out.as_deref(), None);
    create_dir(&dir)?;
    let mut config: SceneConfig = scene.to_config();
    config.spec_hash = Some(hash.clone());
    write_json(&dir.join("scene.json"), &config)?;
    let mut csv = format!("# spec_hash={hash}\n").into_bytes();
    write_trace_csv(&trace, &mut csv)?;
    write_bytes(&dir.join("trace.csv"), &csv)?;

    let all: Vec<usize> = (0..scene.n_cameras()).collect();
    let union = scene.visibility(&all).count() as f64 / scene.grid.n_cells() as f64;
    let areas: Vec<f64> = scene
        .footprints
        .iter()
        .map(|f| f.area_cells as f64 / scene.grid.n_cells() as f64)
        .collect();
    let min = areas.iter().copied().fold(f64::INFINITY, f64::min);
    let max = areas.iter().copied().fold(0.0, f64::max);
    let mean = areas.iter().sum::<f64>() / areas.len() as f64;
    let persons: usize = trace.iter().map(|f| f.persons.len()).sum();
    println!("scene {} -> {}", scene.id, dir.display());
    println!("  cameras: {}", scene.n_cameras());
    println!("  grid: {}x{} cells of {} m", scene.grid.height_cells, scene.grid.width_cells, scene.grid.cell_size_m);
    println!("  union coverage: {union:.3}");
    println!("  per-camera coverage: min {min:.3} mean {mean:.3} max {max:.3}");
    println!("  frames: {} ({} persons)", trace.len(), persons);
    println!("  spec hash: {hash}");
    Ok(())
}

fn cmd_select(args: SelectArgs) -> CmdResult {
    let mut spec = load_spec(&args.spec)?;
    if let Some(s) = &args.strategy {
        StrategyPreset::parse(s)?.apply(&mut spec.selection);
    }
    if let Some(k) = args.k {
        spec.selection.k_max = k;
    }
    if let Some(f) = args.frames {
        spec.selection.n_frames = f;
    }
    if let Some(seed) = args.seed {
        spec.selection.seed = seed;
    }
    if args.repeat >= spec.repeats {
        return Err(Error::InvalidConfig {
            field: "repeat".into(),
            reason: format!("must be below repeats ({})", spec.repeats),
        }
        .into());
    }

    let (mut run, scene, trace) = run_selection(&spec, args.repeat)?;
    let dir = out_dir(args.out.as_deref(), spec.output_dir.as_deref());
    let gt_dir = dir.join("gt");
    create_dir(&gt_dir)?;

    // Training ground truth: persons inside the selected views' union.
    let sigma = run.predictor.kernel_sigma_cells();
    let frames = collect_frames(&trace, &run.dataset.frame_ids)?;
    for frame in &frames {
        let gt = rasterize_density(frame, &scene.grid, sigma, Some(&run.state.combined_mask))?;
        let rel = format!("gt/frame-{:06}.npy", frame.frame_id);
        let mut buf = Vec::new();
        write_npy(gt.values(), &mut buf).map_err(|e| io_err(&dir.join(&rel), e))?;
        write_bytes(&dir.join(&rel), &buf)?;
        run.dataset.gt_paths.insert(frame.frame_id, rel);
    }

    write_json(&dir.join("run.json"), &run)?;
    write_json(
        &dir.join("selection.json"),
        &serde_json::json!({ "spec_hash": run.spec_hash, "state": run.state }),
    )?;
    write_json(
        &dir.join("dataset.json"),
        &serde_json::json!({
            "spec_hash": run.spec_hash,
            "dataset": run.dataset,
            "budget_images": run.budget_images,
            "pseudo_pairs": run.pseudo_pairs,
        }),
    )?;

    println!("strategy {} on {} -> {}", run.strategy, run.scene_id, dir.display());
    println!("  selected: {}", run.state.selected.join(" "));
    println!("  labeled images: {}", run.budget_images);
    println!("  converged: {}", run.converged);
    println!("  spec hash: {}", run.spec_hash);
    if !run.converged {
        eprintln!("warning: selection stopped before reaching K = {}", spec.selection.k_max);
        return Err(Failure::NotConverged);
    }
    Ok(())
}

fn mismatch(what: &str, expected: &str, got: &str) -> Error {
    Error::InvalidConfig {
        field: "spec_hash".into(),
        reason: format!("{what}: expected {expected}, got {got} (use --force to override)"),
    }
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let text = fs::read_to_string(&args.run).map_err(|e| io_err(&args.run, e))?;
    let run: RunOutput = serde_json::from_str(&text)?;
    let embedded = run.spec.hash();
    if embedded != run.spec_hash && !args.force {
        return Err(mismatch("embedded spec does not match its recorded hash", &run.spec_hash, &embedded).into());
    }
    let spec = match &args.spec {
        Some(path) => {
            let spec = load_spec(path)?;
            let h = spec.hash();
            if h != run.spec_hash && !args.force {
                return Err(mismatch("spec differs from the one that produced the run", &run.spec_hash, &h).into());
            }
            spec
        }
        None => run.spec.clone(),
    };
    let effective = spec.for_repeat(run.repeat);
    let scene = effective.load_scene(&run.scene_id)?;
    let trace = effective.load_trace(&scene)?;
    let mut report: EvalReport = evaluate(&scene, &trace, &run.state, &run.predictor, &spec.metrics)?;
    report.spec_hash = run.spec_hash.clone();
    report.strategy = run.strategy.clone();

    let dir = match &args.out {
        Some(p) => p.clone(),
        None => args.run.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    create_dir(&dir)?;
    write_json(&dir.join("eval.json"), &report)?;

    println!("eval {} ({}) -> {}", report.scene_id, report.strategy, dir.join("eval.json").display());
    println!("  cover rate: {:.4}", report.cover_rate);
    println!(
        "  counting: MAE {:.3} MSE {:.3} NAE {:.4}",
        report.counting.mae, report.counting.mse, report.counting.nae
    );
    if let Some(l) = &report.localization {
        println!(
            "  localization: MODA {:.4} MODP {:.4} P {:.4} R {:.4} F1 {:.4}",
            l.moda, l.modp, l.precision, l.recall, l.f1
        );
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> CmdResult {
    let mut spec = load_spec(&args.spec)?;
    if let Some(r) = args.repeats {
        spec.repeats = r;
    }
    let axis: SweepAxis = enum_from_str("axis", &args.axis)?;
    let values = if args.values.is_empty() {
        axis.default_values()
    } else {
        args.values.clone()
    };
    let dir = out_dir(args.out.as_deref(), spec.output_dir.as_deref());
    create_dir(&dir)?;
    let options = SweepOptions {
        heatmaps: !args.no_heatmaps,
    };
    let summary = run_sweep(&spec, axis, &values, &dir, &options)?;
    println!(
        "sweep {} over {} values x {} repeats -> {}",
        axis.name(),
        values.len(),
        spec.repeats,
        summary.csv_path.display()
    );
    println!("  computed {} cells, reused {}", summary.computed, summary.skipped);
    let failed = summary.rows.iter().filter(|r| r.status == "error").count();
    if failed > 0 {
        eprintln!("warning: {failed} cells failed; see the error column");
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> CmdResult {
    let path = &args.path;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let trace = load_trace(path)?;
        let persons: usize = trace.iter().map(|f| f.persons.len()).sum();
        println!("trace ok: {} frames, {} persons", trace.len(), persons);
        return Ok(());
    }
    let value = read_json_value(path)?;
    if value.get("selection").is_some() {
        let spec = load_spec(path)?;
        for r in 0..spec.repeats {
            let effective = spec.for_repeat(r);
            let scene = effective.load_scene(&scene_id_for(r))?;
            scene.validate()?;
            let trace = effective.load_trace(&scene)?;
            effective.selection.validate(&scene, trace.len())?;
        }
        println!("spec ok: hash {}", spec.hash());
    } else {
        let config: SceneConfig = serde_json::from_value(value)?;
        let scene = config.into_scene()?;
        scene.validate()?;
        println!("scene ok: {} cameras on a {}x{} grid", scene.n_cameras(), scene.grid.height_cells, scene.grid.width_cells);
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Csv(c) if c.is_io_error() => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SceneGen(a) => cmd_scene_gen(a),
        Command::Select(a) => cmd_select(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NotConverged) => ExitCode::from(EXIT_NOT_CONVERGED),
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
