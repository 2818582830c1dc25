//! `mom`: generate synthetic scenes, train and evaluate Mean-of-Means
//! models, run the calibrated baseline and perturbation sweeps.

pub mod config;

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use mom_core::baseline::Baseline;
use mom_core::classical::BaselinePoints;
use mom_core::evalkit::{evaluate, report, DistanceMode, MetricsReport};
use mom_core::geometry::WorldPoint;
use mom_core::mom_net::{
    gradient_check, predict, train_with_observer, Checkpoint, DecoderMode, MomNet,
    ObservationSource,
};
use mom_core::rng::{substream, Domain};
use mom_core::sampling::build_training_pairs;
use mom_core::scene::{
    generate, inject_camera_offset, inject_keypoint_noise, read_dataset, write_dataset, Dataset,
    Pattern, SceneSpec,
};

use config::{
    default_output, load, parse_enum, parse_grid, write_snapshot, BaselineRun, EvalRun, GenConfig,
    GradcheckRun, LabeledPath, Split, SweepKind, SweepRun, TrainRun,
};

pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const GRADCHECK_FILE: &str = "gradcheck.csv";

#[derive(Debug, Parser)]
#[command(name = "mom", version, about = "Mean-of-Means multi-camera localization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-camera dataset.
    Gen(GenArgs),
    /// Train a Mean-of-Means model on a dataset.
    Train(TrainArgs),
    /// Calibrate with DLT-PnP and triangulate every frame.
    Baseline(BaselineArgs),
    /// Compare prediction files against ground truth.
    Eval(EvalArgs),
    /// Evaluate a fixed checkpoint under a grid of input perturbations.
    Sweep(SweepArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML file with run settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $MOM_OUTPUT_DIR, else ./out).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Scene preset.
    #[arg(long)]
    pub scene: Option<String>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_enum::<Pattern>)]
    pub pattern: Option<Pattern>,
    /// Keypoint noise in pixels applied while rendering.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    /// Walking speed in meters per frame.
    #[arg(long)]
    pub speed: Option<f64>,
    #[arg(long)]
    pub calibration_points: Option<usize>,
    #[arg(long)]
    pub camera_offset: Option<f64>,
    #[arg(long)]
    pub added_noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Reconstruction loss weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_enum::<DecoderMode>)]
    pub decoder: Option<DecoderMode>,
    #[arg(long, value_parser = parse_enum::<ObservationSource>)]
    pub source: Option<ObservationSource>,
    #[arg(long)]
    pub pairs_per_frame: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub predict_draws: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = parse_enum::<BaselinePoints>)]
    pub points: Option<BaselinePoints>,
    #[arg(long)]
    pub markers: Option<usize>,
    #[arg(long, value_parser = parse_enum::<Split>)]
    pub split: Option<Split>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `label=path` of a predictions CSV; repeatable.
    #[arg(long = "pred", value_parser = parse_labeled)]
    pub predictions: Vec<LabeledPath>,
    #[arg(long, value_parser = parse_enum::<DistanceMode>)]
    pub mode: Option<DistanceMode>,
}

/// Sweep levels parsed from one flag value.
pub type Levels = Vec<f64>;

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, value_parser = parse_enum::<SweepKind>)]
    pub kind: Option<SweepKind>,
    /// `a..b` (inclusive) or comma-separated levels in pixels.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<Levels>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_enum::<Split>)]
    pub split: Option<Split>,
    #[arg(long)]
    pub predict_draws: Option<usize>,
    #[arg(long, value_parser = parse_enum::<DistanceMode>)]
    pub mode: Option<DistanceMode>,
    /// Evaluate the calibrated baseline alongside the checkpoint.
    #[arg(long)]
    pub baseline: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_parser = parse_enum::<DecoderMode>)]
    pub decoder: Option<DecoderMode>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

fn parse_labeled(s: &str) -> Result<LabeledPath, String> {
    let (label, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected label=path, got {s:?}"))?;
    if label.is_empty() || path.is_empty() {
        return Err(format!("expected label=path, got {s:?}"));
    }
    Ok(LabeledPath {
        label: label.to_string(),
        path: PathBuf::from(path),
    })
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn output_dir(resolved: &mut Option<PathBuf>, flag: Option<PathBuf>) -> PathBuf {
    set(resolved, flag.map(Some));
    resolved.get_or_insert_with(default_output).clone()
}

fn required(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.clone()
        .with_context(|| format!("missing {what} (pass --{what} or set it in --config)"))
}

/// Parses `argv` and runs the command. Returns the process exit status:
/// 0 on success, 1 on failure, 2 on usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let mut cfg: GenConfig = load(a.common.config.as_deref())?;
    if let Some(name) = &a.scene {
        if *name != cfg.scene.name {
            cfg.scene = SceneSpec::named(name)?;
        }
    }
    let s = &mut cfg.scene;
    set(&mut s.frames, a.frames);
    set(&mut s.subjects, a.subjects);
    set(&mut s.seed, a.seed);
    set(&mut s.pattern, a.pattern);
    set(&mut s.keypoint_noise, a.noise);
    set(&mut s.points_per_body, a.points);
    set(&mut s.speed, a.speed);
    set(&mut s.calibration_points, a.calibration_points);
    set(&mut cfg.camera_offset, a.camera_offset);
    set(&mut cfg.added_noise, a.added_noise);
    let out = output_dir(&mut cfg.output, a.common.output);
    if !(cfg.camera_offset >= 0.0) || !(cfg.added_noise >= 0.0) {
        bail!("perturbation levels must be non-negative");
    }

    let scene = generate(&cfg.scene)?;
    let mut ds = scene.dataset;
    ds = inject_camera_offset(&ds, cfg.camera_offset, cfg.scene.seed);
    ds = inject_keypoint_noise(&ds, cfg.added_noise, cfg.scene.seed);
    write_dataset(&out, &ds)?;
    write_snapshot(&out, &cfg)?;
    eprintln!(
        "wrote {} frames ({} cameras) to {}{}",
        ds.records.len(),
        ds.manifest.cameras,
        out.display(),
        if scene.dropped_points > 0 {
            format!("; dropped {} points behind a camera", scene.dropped_points)
        } else {
            String::new()
        }
    );
    Ok(())
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    let (ds, warnings) =
        read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(ds)
}

fn select(ds: &Dataset, split: Split, test_fraction: f64) -> Dataset {
    let (train, test) = ds.split(test_fraction);
    match split {
        Split::Test => ds.subset(&test),
        Split::Train => ds.subset(&train),
        Split::All => ds.clone(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionRow {
    frame: u64,
    x: f64,
    y: f64,
    z: f64,
}

pub fn write_predictions(path: &Path, frames: &[u64], points: &[WorldPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (frame, p) in frames.iter().zip(points) {
        w.serialize(PredictionRow {
            frame: *frame,
            x: p.x,
            y: p.y,
            z: p.z,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<(u64, WorldPoint)>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize::<PredictionRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.with_context(|| format!("{} row {}", path.display(), i + 1))?;
            Ok((row.frame, WorldPoint::new(row.x, row.y, row.z)))
        })
        .collect()
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainRun = load(a.common.config.as_deref())?;
    set(&mut cfg.data, a.data.map(Some));
    let t = &mut cfg.train;
    set(&mut t.epochs, a.epochs);
    set(&mut t.learning_rate, a.lr);
    set(&mut t.batch_size, a.batch_size);
    set(&mut t.lambda, a.lambda);
    set(&mut t.seed, a.seed);
    set(&mut t.decoder_mode, a.decoder);
    set(&mut t.source, a.source);
    set(&mut t.pairs_per_frame, a.pairs_per_frame);
    set(&mut cfg.test_fraction, a.test_fraction);
    set(&mut cfg.predict_draws, a.predict_draws);
    let out = output_dir(&mut cfg.output, a.common.output);
    let data = required(&cfg.data, "data")?;
    cfg.validate()?;
    cfg.train.validate()?;

    let ds = load_dataset(&data)?;
    let train_set = select(&ds, Split::Train, cfg.test_fraction);
    let test_set = select(&ds, Split::Test, cfg.test_fraction);
    let train_obs = train_set.observation_sets();
    let test_obs = test_set.observation_sets();
    eprintln!(
        "training on {} frames, testing on {}",
        train_obs.len(),
        test_obs.len()
    );
    let every = (cfg.train.epochs / 10).max(1);
    let ckpt = train_with_observer(&train_obs, &test_obs, ds.normalizer(), &cfg.train, |r| {
        if r.epoch % every == 0 {
            eprintln!(
                "epoch {:>4}  train loc {:.6} rec {:.6}  test loc {:.6}",
                r.epoch, r.train_loc, r.train_rec, r.test_loc
            );
        }
    })?;

    fs::create_dir_all(&out)?;
    ckpt.save(&out.join(CHECKPOINT_FILE))?;
    fs::write(out.join(LOSS_FILE), ckpt.loss_csv())?;
    let started = Instant::now();
    let preds = predict(&ckpt, &test_obs, cfg.train.seed, cfg.predict_draws)?;
    let elapsed = started.elapsed().as_secs_f64();
    if elapsed > 0.0 {
        eprintln!("predicted {} frames at {:.0} frames/s", preds.len(), preds.len() as f64 / elapsed);
    }
    let frames: Vec<u64> = test_set.records.iter().map(|r| r.frame).collect();
    write_predictions(&out.join(PREDICTIONS_FILE), &frames, &preds)?;
    write_snapshot(&out, &cfg)?;
    Ok(())
}

fn cmd_baseline(a: BaselineArgs) -> Result<()> {
    let mut cfg: BaselineRun = load(a.common.config.as_deref())?;
    set(&mut cfg.data, a.data.map(Some));
    set(&mut cfg.points, a.points);
    set(&mut cfg.markers, a.markers.map(Some));
    set(&mut cfg.split, a.split);
    set(&mut cfg.test_fraction, a.test_fraction);
    let out = output_dir(&mut cfg.output, a.common.output);
    let data = required(&cfg.data, "data")?;
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        bail!("test fraction must lie in (0, 1), got {}", cfg.test_fraction);
    }

    let ds = load_dataset(&data)?;
    let baseline = Baseline::from_dataset(&ds, cfg.markers)?;
    for (k, r) in baseline.reprojection.iter().enumerate() {
        eprintln!("camera {k}: calibration reprojection rms {:.3e} px", r.rms);
    }
    let subset = select(&ds, cfg.split, cfg.test_fraction);
    let preds = baseline.predict(&subset, cfg.points)?;
    let frames: Vec<u64> = subset.records.iter().map(|r| r.frame).collect();
    fs::create_dir_all(&out)?;
    write_predictions(&out.join(PREDICTIONS_FILE), &frames, &preds)?;
    write_snapshot(&out, &cfg)?;
    Ok(())
}

fn resolve_mode(mode: Option<DistanceMode>, ds: &Dataset) -> DistanceMode {
    mode.unwrap_or_else(|| DistanceMode::for_manifest(ds.manifest.planar))
}

/// Ground truth in the order of `predictions`, by frame id.
fn ground_truth_for(ds: &Dataset, predictions: &[(u64, WorldPoint)]) -> Result<Vec<WorldPoint>> {
    let by_frame: HashMap<u64, WorldPoint> = ds.records.iter().map(|r| (r.frame, r.gt)).collect();
    predictions
        .iter()
        .map(|(f, _)| {
            by_frame
                .get(f)
                .copied()
                .with_context(|| format!("frame {f} is not in the dataset"))
        })
        .collect()
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let mut cfg: EvalRun = load(a.common.config.as_deref())?;
    set(&mut cfg.data, a.data.map(Some));
    if !a.predictions.is_empty() {
        cfg.predictions = a.predictions;
    }
    set(&mut cfg.mode, a.mode.map(Some));
    let out = output_dir(&mut cfg.output, a.common.output);
    let data = required(&cfg.data, "data")?;
    if cfg.predictions.is_empty() {
        bail!("no predictions to evaluate (pass --pred label=path)");
    }

    let ds = load_dataset(&data)?;
    let mode = resolve_mode(cfg.mode, &ds);
    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    for lp in &cfg.predictions {
        let preds = read_predictions(&lp.path)?;
        let gt = ground_truth_for(&ds, &preds)?;
        let points: Vec<WorldPoint> = preds.iter().map(|(_, p)| *p).collect();
        let r = evaluate(&points, &gt, mode).with_context(|| format!("evaluating {}", lp.label))?;
        rows.push((lp.label.clone(), r));
    }
    fs::create_dir_all(&out)?;
    let table = report(&rows);
    fs::write(out.join(METRICS_FILE), &table)?;
    print!("{table}");
    write_snapshot(&out, &cfg)?;
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let mut cfg: SweepRun = load(a.common.config.as_deref())?;
    set(&mut cfg.data, a.data.map(Some));
    set(&mut cfg.checkpoint, a.ckpt.map(Some));
    set(&mut cfg.kind, a.kind);
    set(&mut cfg.grid, a.grid);
    set(&mut cfg.seed, a.seed);
    set(&mut cfg.split, a.split);
    set(&mut cfg.predict_draws, a.predict_draws);
    set(&mut cfg.mode, a.mode.map(Some));
    cfg.baseline |= a.baseline;
    let out = output_dir(&mut cfg.output, a.common.output);
    let data = required(&cfg.data, "data")?;
    let ckpt_path = required(&cfg.checkpoint, "ckpt")?;
    cfg.validate()?;

    let ds = load_dataset(&data)?;
    let ckpt = Checkpoint::load(&ckpt_path)
        .with_context(|| format!("loading {}", ckpt_path.display()))?;
    let subset = select(&ds, cfg.split, cfg.test_fraction);
    let gt = subset.ground_truth();
    let mode = resolve_mode(cfg.mode, &ds);
    let baseline = if cfg.baseline {
        Some(Baseline::from_dataset(&ds, None)?)
    } else {
        None
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "level", "method", "mean", "median", "std", "ate", "rpe", "acc02", "acc03", "acc04",
        "acc05",
    ])?;
    let mut row = |level: f64, method: &str, r: &MetricsReport| -> Result<()> {
        let mut fields = vec![level.to_string(), method.to_string()];
        fields.extend(
            [r.mean, r.median, r.std, r.ate, r.rpe, r.acc[0], r.acc[1], r.acc[2], r.acc[3]]
                .iter()
                .map(f64::to_string),
        );
        w.write_record(&fields)?;
        Ok(())
    };
    for &level in &cfg.grid {
        let perturbed = match cfg.kind {
            SweepKind::CameraOffset => inject_camera_offset(&subset, level, cfg.seed),
            SweepKind::KeypointNoise => inject_keypoint_noise(&subset, level, cfg.seed),
        };
        let preds = predict(&ckpt, &perturbed.observation_sets(), cfg.seed, cfg.predict_draws)?;
        let r = evaluate(&preds, &gt, mode)?;
        eprintln!("level {level:>5}: acc@0.3 {:.2}%  mean {:.4} m", r.acc[1], r.mean);
        row(level, "mom", &r)?;
        if let Some(b) = &baseline {
            let bp = b.predict(&perturbed, cfg.baseline_points)?;
            row(level, "baseline", &evaluate(&bp, &gt, mode)?)?;
        }
    }
    let bytes = w.into_inner().context("flushing sweep table")?;
    fs::create_dir_all(&out)?;
    fs::write(out.join(SWEEP_FILE), bytes)?;
    write_snapshot(&out, &cfg)?;
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    let mut cfg: GradcheckRun = load(a.common.config.as_deref())?;
    set(&mut cfg.seed, a.seed);
    set(&mut cfg.step, a.step);
    set(&mut cfg.lambda, a.lambda);
    set(&mut cfg.decoder_mode, a.decoder);
    set(&mut cfg.tolerance, a.tolerance);
    let out = output_dir(&mut cfg.output, a.common.output);
    if !(cfg.step > 0.0) || cfg.frames == 0 {
        bail!("gradcheck needs a positive step and at least one frame");
    }

    let spec = SceneSpec {
        frames: cfg.frames,
        subjects: 1,
        seed: cfg.seed,
        ..SceneSpec::walk_2cam()
    };
    let scene = generate(&spec)?;
    let cameras = scene.dataset.manifest.cameras;
    let net = MomNet::init(
        cameras,
        &cfg.architecture,
        scene.dataset.normalizer(),
        cfg.decoder_mode,
        &mut substream(cfg.seed, Domain::GradCheck, 0),
    )?;
    let pairs = build_training_pairs(
        &scene.observation_sets_with_world(),
        cameras,
        1,
        &mut substream(cfg.seed, Domain::GradCheck, 1),
    )?;
    let report = gradient_check(&net, &pairs, cfg.lambda, cfg.step)?;
    fs::create_dir_all(&out)?;
    fs::write(out.join(GRADCHECK_FILE), report.csv())?;
    write_snapshot(&out, &cfg)?;
    let worst = report.max_relative_error();
    println!("max relative error {worst:e} over {} tensors", report.tensors.len());
    if !(worst < cfg.tolerance) {
        bail!("gradient check failed: {worst:e} >= {:e}", cfg.tolerance);
    }
    Ok(())
}
