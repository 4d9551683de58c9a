//! Command-line surface.
//!
//! Exit codes: 0 success, 1 IO or parse failure, 2 usage error,
//! 3 validation failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use super::plot::{emit_plot, Series};
use super::store::{read_dataset, read_json, read_scene, OutputDir};
use crate::body_model::{forward, BodyParams, BodyTemplate};
use crate::estimator::annotate::{annotate_dataset, annotator_config, PriorProvider};
use crate::estimator::experiments::{
    ablate, ambiguity_gamma_deg, focal_sweep, focal_sweep_config, AblationConfig, AblationTable,
    DEFAULT_FOCAL_FACTORS, GAMMA_RANGE_DEG,
};
use crate::estimator::fit::{translation_rel_error, yaw_error_deg};
use crate::estimator::lifter::{train_lifter, LifterModel};
use crate::estimator::{fit_sample, FitConfig, FitReport};
use crate::losses::{LossMode, LossWeights};
use crate::metrics::{mpjpe, pa_mpjpe, pve};
use crate::smoothing::{smooth_sequence, OneEuroConfig};
use crate::synthetic::{
    add_noise, derive_seed, gen_ambiguity_pair, gen_dataset, gen_motion, jitter_joints, MotionSequence,
    Scene, SceneConfig, Supervision,
};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

/// Caps the worker threads when set to a positive integer.
pub const THREADS_ENV: &str = "CLIFF_GEOM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "cliff-geom", version, about = "Full-frame-aware body fitting on synthetic scenes")]
pub struct Cli {
    /// Print a JSON summary on stdout instead of a text line on stderr.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a dataset of synthetic scenes.
    Gen(GenArgs),
    /// Generate crop-ambiguity pairs (center and offset member per pair).
    GenAmbiguity(GenAmbiguityArgs),
    /// Fit every person of a dataset from its observations.
    Fit(FitArgs),
    /// Train the keypoint lifter.
    TrainLifter(TrainLifterArgs),
    /// Write pseudo-ground truth from 2D keypoints and a prior.
    Annotate(AnnotateArgs),
    /// Compare predicted scenes against ground-truth scenes.
    Eval(EvalArgs),
    /// Lifter input/supervision ablation plus fitter ambiguity rows.
    Ablate(AblateArgs),
    /// Annotator accuracy under a mis-specified focal length.
    FocalSweep(FocalSweepArgs),
    /// OneEuro smoothing of a joint sequence.
    Smooth(SmoothArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub persons: usize,
    /// Focal length in pixels; defaults to the image diagonal.
    #[arg(long)]
    pub focal: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub lateral_extent: f64,
    /// Keypoint noise standard deviation, pixels.
    #[arg(long, default_value_t = 0.0)]
    pub noise_px: f64,
    #[arg(long, default_value_t = 0.0)]
    pub drop_prob: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct GenAmbiguityArgs {
    #[arg(long)]
    pub seed: u64,
    /// Number of pairs.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = GAMMA_RANGE_DEG[0])]
    pub gamma_min_deg: f64,
    #[arg(long, default_value_t = GAMMA_RANGE_DEG[1])]
    pub gamma_max_deg: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupervisionArg {
    Keypoints,
    Full,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Loss frame: crop or full.
    #[arg(long, default_value = "full")]
    pub mode: LossMode,
    #[arg(long, value_enum, default_value = "keypoints")]
    pub supervision: SupervisionArg,
    #[arg(long, default_value_t = FitConfig::default().max_iters)]
    pub max_iters: usize,
    #[arg(long, default_value_t = FitConfig::default().tol)]
    pub tol: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainLifterArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = AblationConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = AblationConfig::default().learning_rate)]
    pub lr: f64,
    /// Feed the bbox information to the lifter.
    #[arg(long)]
    pub ci: bool,
    /// Supervise 2D keypoints in the full frame instead of the crop.
    #[arg(long)]
    pub cs: bool,
    #[arg(long, default_value_t = AblationConfig::default().weights.kp2d)]
    pub kp2d_weight: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    PerturbedGt,
    Zero,
    Lifter,
}

#[derive(Debug, Args, Serialize)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Seeds the prior perturbation.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "perturbed-gt")]
    pub prior: PriorKind,
    #[arg(long, default_value_t = 10.0)]
    pub prior_angle_deg: f64,
    /// Lifter model JSON, for `--prior lifter`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = annotator_config().prior_weight)]
    pub prior_weight: f64,
    #[arg(long, default_value_t = annotator_config().max_iters)]
    pub max_iters: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Scene file or dataset directory; pseudo-ground truth is used where present.
    #[arg(long)]
    pub pred: PathBuf,
    /// Scene file or dataset directory.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub seeds: Vec<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Fraction of scenes, taken from the end, held out for testing.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub holdout: f64,
    #[arg(long, default_value_t = AblationConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = AblationConfig::default().learning_rate)]
    pub lr: f64,
    #[arg(long, default_value_t = AblationConfig::default().weights.kp2d)]
    pub kp2d_weight: f64,
    /// Ambiguity pairs fitted per seed for the fitter rows.
    #[arg(long, default_value_t = AblationConfig::default().pairs_per_seed)]
    pub pairs: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FocalSweepArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Seeds the prior perturbation.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FOCAL_FACTORS.to_vec())]
    pub factors: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub prior_angle_deg: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SmoothArgs {
    /// Joint sequence JSON to smooth; a synthetic jittered motion is generated otherwise.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Reference sequence JSON for the error report; defaults to the input.
    #[arg(long, requires = "input")]
    pub reference: Option<PathBuf>,
    #[arg(long, required_unless_present = "input")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 150)]
    pub frames: usize,
    #[arg(long, default_value_t = 20.0)]
    pub jitter_mm: f64,
    #[arg(long, default_value_t = OneEuroConfig::default().min_cutoff)]
    pub min_cutoff: f64,
    #[arg(long, default_value_t = OneEuroConfig::default().beta)]
    pub beta: f64,
    #[arg(long, default_value_t = OneEuroConfig::default().d_cutoff)]
    pub d_cutoff: f64,
    #[arg(long, default_value_t = OneEuroConfig::default().fps)]
    pub fps: f64,
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            if cli.json {
                println!("{summary}");
            } else {
                eprintln!("{}", human_summary(&summary));
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_IO
            }
        }
    }
}

fn human_summary(summary: &Value) -> String {
    match summary.as_object() {
        Some(map) => map
            .iter()
            .filter(|(_, v)| !v.is_array() && !v.is_object())
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" "),
        None => summary.to_string(),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::InvalidParameter(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

/// Runs a parsed command and returns its summary.
pub fn execute(cli: &Cli) -> Result<Value> {
    let template = BodyTemplate::shipped();
    thread_pool()?.install(|| match &cli.command {
        Command::Gen(a) => cmd_gen(a, &cli.command, &template),
        Command::GenAmbiguity(a) => cmd_gen_ambiguity(a, &cli.command, &template),
        Command::Fit(a) => cmd_fit(a, &cli.command, &template),
        Command::TrainLifter(a) => cmd_train_lifter(a, &cli.command, &template),
        Command::Annotate(a) => cmd_annotate(a, &cli.command, &template),
        Command::Eval(a) => cmd_eval(a, &cli.command, &template),
        Command::Ablate(a) => cmd_ablate(a, &cli.command, &template),
        Command::FocalSweep(a) => cmd_focal_sweep(a, &cli.command, &template),
        Command::Smooth(a) => cmd_smooth(a, &cli.command, &template),
    })
}

fn finish(out: OutputDir, command: &Command, seed: Option<u64>, mut summary: Value) -> Result<Value> {
    let config = serde_json::to_value(command).map_err(|e| Error::json("<config>", e))?;
    let (name, config) = match config {
        Value::Object(m) if m.len() == 1 => m.into_iter().next().expect("one entry"),
        other => ("unknown".to_string(), other),
    };
    let dir = out.path().display().to_string();
    let manifest = out.finish(&name, config, seed)?;
    if let Value::Object(m) = &mut summary {
        m.insert("command".into(), json!(name));
        m.insert("out".into(), json!(dir));
        m.insert("artifacts".into(), json!(manifest.artifacts.len()));
    }
    Ok(summary)
}

fn load_scenes(path: &Path) -> Result<Vec<Scene>> {
    if path.is_dir() {
        read_dataset(path)
    } else {
        Ok(vec![read_scene(path)?])
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn cmd_gen(a: &GenArgs, cmd: &Command, t: &BodyTemplate) -> Result<Value> {
    if a.n == 0 {
        return Err(Error::InvalidParameter("--n must be at least 1".into()));
    }
    let config = SceneConfig {
        n_persons: a.persons,
        focal: a.focal,
        lateral_extent: a.lateral_extent,
        ..SceneConfig::default()
    };
    let mut scenes = gen_dataset(a.seed, a.n, &config, t)?;
    if a.noise_px != 0.0 || a.drop_prob != 0.0 {
        let noise_seed = derive_seed(a.seed, u64::MAX);
        scenes = scenes
            .iter()
            .enumerate()
            .map(|(i, s)| add_noise(s, a.noise_px, a.drop_prob, derive_seed(noise_seed, i as u64)))
            .collect::<Result<_>>()?;
    }
    let mut out = OutputDir::create(&a.out)?;
    out.write_scenes(&scenes)?;
    finish(out, cmd, Some(a.seed), json!({ "scenes": scenes.len() }))
}

fn cmd_gen_ambiguity(a: &GenAmbiguityArgs, cmd: &Command, t: &BodyTemplate) -> Result<Value> {
    if a.n == 0 || !(a.gamma_min_deg <= a.gamma_max_deg) {
        return Err(Error::InvalidParameter("need --n >= 1 and gamma-min <= gamma-max".into()));
    }
    let range = [a.gamma_min_deg, a.gamma_max_deg];
    let mut scenes = Vec::with_capacity(2 * a.n);
    let mut table = String::from("pair,gamma_x_deg,gamma_y_deg\n");
    for i in 0..a.n as u64 {
        let gamma = ambiguity_gamma_deg(a.seed, i, range);
        let pair = gen_ambiguity_pair(derive_seed(a.seed, i), gamma.to_radians(), t)?;
        writeln!(table, "{i},{},{}", pair.gamma.0.to_degrees(), pair.gamma.1.to_degrees()).expect("string write");
        scenes.push(pair.scene_center);
        scenes.push(pair.scene_offset);
    }
    let mut out = OutputDir::create(&a.out)?;
    out.write_scenes(&scenes)?;
    out.write_bytes("pairs.csv", table.as_bytes())?;
    finish(out, cmd, Some(a.seed), json!({ "pairs": a.n, "scenes": scenes.len() }))
}

#[derive(Debug, Serialize)]
struct FitRecord {
    scene: usize,
    person: usize,
    report: Option<FitReport>,
    error: Option<String>,
}

const METRIC_HEADER: &str = "scene,person,mpjpe_mm,pa_mpjpe_mm,pve_mm,yaw_deg";

/// Errors of `pred` against person `person` of `gt`, as
/// `[mpjpe, pa_mpjpe, pve, yaw]`.
fn person_errors(pred: &BodyParams, gt_scene: &Scene, person: usize, t: &BodyTemplate) -> Result<[f64; 4]> {
    let gt = gt_scene.persons[person].params()?;
    let (pj, pv) = forward(pred, t);
    let (gj, gv) = forward(&gt, t);
    Ok([mpjpe(&pj, &gj)?, pa_mpjpe(&pj, &gj)?, pve(&pv, &pj.joints[0], &gv, &gj.joints[0])?, yaw_error_deg(pred, &gt)])
}

fn metric_row(out: &mut String, scene: usize, person: usize, e: &[f64; 4]) {
    writeln!(out, "{scene},{person},{:.6},{:.6},{:.6},{:.6}", e[0], e[1], e[2], e[3]).expect("string write");
}

fn column_means(rows: &[[f64; 4]]) -> Value {
    let col = |i: usize| mean(&rows.iter().map(|r| r[i]).collect::<Vec<_>>());
    json!({ "mpjpe_mm": col(0), "pa_mpjpe_mm": col(1), "pve_mm": col(2), "yaw_deg": col(3) })
}

fn cmd_fit(a: &FitArgs, cmd: &Command, t: &BodyTemplate) -> Result<Value> {
    let scenes = read_dataset(&a.dataset)?;
    let config = FitConfig { loss_frame: a.mode, max_iters: a.max_iters, tol: a.tol, ..FitConfig::default() };
    config.validate()?;
    let sup = match a.supervision {
        SupervisionArg::Keypoints => Supervision::KEYPOINTS_ONLY,
        SupervisionArg::Full => Supervision::FULL,
    };
    let jobs: Vec<(usize, usize)> =
        scenes.iter().enumerate().flat_map(|(i, s)| (0..s.persons.len()).map(move |p| (i, p))).collect();
    use rayon::prelude::*;
    let records: Vec<FitRecord> = jobs
        .par_iter()
        .map(|&(scene, person)| {
            let r = scenes[scene].observation(person, sup).and_then(|obs| fit_sample(&obs, &config, None, t));
            match r {
                Ok(report) => FitRecord { scene, person, report: Some(report), error: None },
                Err(e) => FitRecord { scene, person, report: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    let mut csv = format!("{METRIC_HEADER},trans_rel_error\n");
    let mut rows = Vec::new();
    for r in &records {
        if let Some(rep) = &r.report {
            let e = person_errors(&rep.params(), &scenes[r.scene], r.person, t)?;
            metric_row(&mut csv, r.scene, r.person, &e);
            csv.pop();
            let tr = translation_rel_error(&rep.t_full, &scenes[r.scene].persons[r.person].t_full);
            writeln!(csv, ",{tr:.6}").expect("string write");
            rows.push(e);
        }
    }
    let failures = records.len() - rows.len();
    let mut out = OutputDir::create(&a.out)?;
    out.write_json("fits.json", &records)?;
    out.write_bytes("metrics.csv", csv.as_bytes())?;
    let means = if rows.is_empty() { Value::Null } else { column_means(&rows) };
    finish(out, cmd, None, json!({ "fitted": rows.len(), "failures": failures, "mean": means }))
}

fn cmd_train_lifter(a: &TrainLifterArgs, cmd: &Command, t: &BodyTemplate) -> Result<Value> {
    let scenes = read_dataset(&a.dataset)?;
    let config = FitConfig {
        loss_frame: if a.cs { LossMode::Full } else { LossMode::Crop },
        use_bbox_input: a.ci,
        weights: LossWeights { kp2d: a.kp2d_weight, ..AblationConfig::default().weights },
        step: a.lr,
        ..FitConfig::default()
    };
    let (model, report) = train_lifter(&scenes, &config, a.epochs, a.seed, t)?;
    let mut out = OutputDir::create(&a.out)?;
    out.write_json("model.json", &model)?;
    let epochs: Vec<f64> = (1..=report.epoch_losses.len()).map(|e| e as f64).collect();
    emit_plot(&mut out, "train_curve", &[Series::new("train_loss", epochs, report.epoch_losses.clone())], "epoch", "loss")?;
    let last = report.epoch_losses.last().copied();
    finish(out, cmd, Some(a.seed), json!({ "epochs": a.epochs, "final_loss": last }))
}

fn cmd_annotate(a: &AnnotateArgs, cmd: &Command, t: &BodyTemplate) -> Result<Value> {
    let scenes = read_dataset(&a.dataset)?;
    let provider = match a.prior {
        PriorKind::PerturbedGt => PriorProvider::PerturbedGt { angle: a.prior_angle_deg.to_radians(), seed: a.seed },
        PriorKind::Zero => PriorProvider::Zero,
        PriorKind::Lifter => {
            let path = a
                .model
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("--prior lifter needs --model".into()))?;
            let model: LifterModel = read_json(path)?;
            model.validate()?;
            PriorProvider::Lifter(Box::new(model))
        }
    };
    let config = FitConfig { prior_weight: a.prior_weight, max_iters: a.max_iters, ..annotator_config() };
    let ann = annotate_dataset(&scenes, &provider, &config, t)?;
    let mut csv = format!("{METRIC_HEADER},source\n");
    let (mut prior_rows, mut pseudo_rows) = (Vec::new(), Vec::new());
    for (i, (scene, priors)) in ann.scenes.iter().zip(&ann.priors).enumerate() {
        let pseudo = scene.pseudo_gt.as_deref().unwrap_or_default();
        for (p, prior) in priors.iter().enumerate() {
            let e = person_errors(prior, scene, p, t)?;
            metric_row(&mut csv, i, p, &e);
            csv.pop();
            csv.push_str(",prior\n");
            prior_rows.push(e);
            if let Some(Some(pg)) = pseudo.get(p) {
                let e = person_errors(&BodyParams::from_slices(&pg.pose, &pg.shape)?, scene, p, t)?;
                metric_row(&mut csv, i, p, &e);
                csv.pop();
                csv.push_str(",pseudo_gt\n");
                pseudo_rows.push(e);
            }
        }
    }
    let mut out = OutputDir::create(&a.out)?;
    out.write_scenes(&ann.scenes)?;
    out.write_json("provenance.json", &ann.provenance)?;
    out.write_bytes("metrics.csv", csv.as_bytes())?;
    let summary = json!({
        "annotated": ann.provenance.annotated,
        "failures": ann.provenance.failures.len(),
        "prior_mean": column_means(&prior_rows),
        "pseudo_gt_mean": if pseudo_rows.is_empty() { Value::Null } else { column_means(&pseudo_rows) },
    });
    finish(out, cmd, Some(a.seed), summary)
}

fn cmd_eval(a: &EvalArgs, cmd: &Command, t: &BodyTemplate) -> Result<Value> {
    let pred = load_scenes(&a.pred)?;
    let gt = load_scenes(&a.gt)?;
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch { expected: gt.len(), got: pred.len() });
    }
    let mut csv = format!("{METRIC_HEADER}\n");
    let mut rows = Vec::new();
    for (i, (p, g)) in pred.iter().zip(&gt).enumerate() {
        if p.persons.len() != g.persons.len() {
            return Err(Error::DimensionMismatch { expected: g.persons.len(), got: p.persons.len() });
        }
        for person in 0..g.persons.len() {
            let params = match p.pseudo_gt.as_ref().and_then(|v| v.get(person).cloned().flatten()) {
                Some(pg) => BodyParams::from_slices(&pg.pose, &pg.shape)?,
                None => p.persons[person].params()?,
            };
            let e = person_errors(&params, g, person, t)?;
            metric_row(&mut csv, i, person, &e);
            rows.push(e);
        }
    }
    let mut out = OutputDir::create(&a.out)?;
    out.write_bytes("metrics.csv", csv.as_bytes())?;
    let summary = json!({ "persons": rows.len(), "mean": column_means(&rows) });
    out.write_json("summary.json", &summary)?;
    finish(out, cmd, None, summary)
}

fn ablation_csv(rows: &[crate::estimator::experiments::AblationRow]) -> String {
    let mut csv = String::from("config,mpjpe_mean,mpjpe_std,pa_mpjpe_mean,pa_mpjpe_std,yaw_mean,yaw_std\n");
    for r in rows {
        writeln!(
            csv,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.config, r.mpjpe.mean, r.mpjpe.std, r.pa_mpjpe.mean, r.pa_mpjpe.std, r.yaw.mean, r.yaw.std
        )
        .expect("string write");
    }
    csv
}

fn cmd_ablate(a: &AblateArgs, cmd: &Command, t: &BodyTemplate) -> Result<Value> {
    let scenes = read_dataset(&a.dataset)?;
    if !(a.holdout > 0.0 && a.holdout < 1.0) {
        return Err(Error::InvalidParameter("--holdout must lie in (0, 1)".into()));
    }
    let n_test = ((scenes.len() as f64 * a.holdout).round() as usize).clamp(1, scenes.len().saturating_sub(1).max(1));
    if n_test >= scenes.len() {
        return Err(Error::InvalidParameter("dataset too small to split".into()));
    }
    let (train, test) = scenes.split_at(scenes.len() - n_test);
    let defaults = AblationConfig::default();
    let config = AblationConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        weights: LossWeights { kp2d: a.kp2d_weight, ..defaults.weights },
        pairs_per_seed: a.pairs,
        ..defaults
    };
    let table: AblationTable = ablate(train, test, &a.seeds, &config, t)?;
    let mut out = OutputDir::create(&a.out)?;
    out.write_bytes("ablation.csv", ablation_csv(&table.lifter).as_bytes())?;
    if !table.fitter.is_empty() {
        out.write_bytes("fitter.csv", ablation_csv(&table.fitter).as_bytes())?;
    }
    out.write_json("ablation.json", &table)?;
    let mpjpe: Value = table.lifter.iter().map(|r| (r.config.clone(), json!(r.mpjpe.mean))).collect();
    finish(out, cmd, None, json!({ "train": train.len(), "test": test.len(), "mpjpe_mean": mpjpe }))
}

fn cmd_focal_sweep(a: &FocalSweepArgs, cmd: &Command, t: &BodyTemplate) -> Result<Value> {
    let scenes = read_dataset(&a.dataset)?;
    let provider = PriorProvider::PerturbedGt { angle: a.prior_angle_deg.to_radians(), seed: a.seed };
    let sweep = focal_sweep(&scenes, &a.factors, &provider, &focal_sweep_config(), t)?;
    let mut out = OutputDir::create(&a.out)?;
    emit_plot(
        &mut out,
        "focal_sweep",
        &[Series::new("mpjpe", sweep.factors.clone(), sweep.mpjpe.clone())],
        "factor",
        "mpjpe_mm",
    )?;
    out.write_json("focal_sweep.json", &sweep)?;
    let failures: usize = sweep.failures.iter().sum();
    finish(out, cmd, Some(a.seed), json!({ "factors": sweep.factors.len(), "failures": failures }))
}

fn cmd_smooth(a: &SmoothArgs, cmd: &Command, t: &BodyTemplate) -> Result<Value> {
    let config = OneEuroConfig { min_cutoff: a.min_cutoff, beta: a.beta, d_cutoff: a.d_cutoff, fps: a.fps };
    config.validate()?;
    let (input, reference) = match (&a.input, a.seed) {
        (Some(path), _) => {
            let input: MotionSequence = read_json(path)?;
            let reference = match &a.reference {
                Some(r) => read_json(r)?,
                None => input.clone(),
            };
            (input, reference)
        }
        (None, Some(seed)) => {
            let clean = gen_motion(seed, a.frames, a.fps, t)?;
            let noisy = jitter_joints(&clean, a.jitter_mm / 1000.0, derive_seed(seed, 1))?;
            (noisy, clean)
        }
        (None, None) => return Err(Error::InvalidParameter("--seed or --input is required".into())),
    };
    let report = smooth_sequence(&input.joint_sets(), &reference.joint_sets(), &config)?;
    let mut out = OutputDir::create(&a.out)?;
    if a.input.is_none() {
        out.write_json("input.json", &input)?;
        out.write_json("reference.json", &reference)?;
    }
    out.write_json("smoothed.json", &MotionSequence { fps: config.fps, joints: report.smoothed.clone() })?;
    let summary = json!({
        "frames": report.smoothed.len(),
        "accel_before": report.accel_before,
        "accel_after": report.accel_after,
        "mpjpe_before": report.mpjpe_before,
        "mpjpe_after": report.mpjpe_after,
    });
    out.write_json("report.json", &summary)?;
    finish(out, cmd, a.seed, summary)
}
