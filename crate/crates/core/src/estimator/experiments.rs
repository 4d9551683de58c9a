//! Experiment drivers: the input/supervision ablation, the crop-ambiguity
//! study and the focal-length sweep.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::annotate::{annotator_config, PriorProvider};
use super::fit::{fit_sample, yaw_error_deg, FitConfig};
use super::lifter::{lifter_input, train_lifter, LifterModel};
use crate::body_model::{forward_joints, BodyParams, BodyTemplate};
use crate::losses::{LossMode, LossWeights};
use crate::metrics::{mpjpe, pa_mpjpe};
use crate::synthetic::{derive_seed, gen_ambiguity_pair, rng_for, Scene, SceneConfig, Supervision, AMBIGUITY_FOCAL};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Errors of one model on one evaluation set; all means, mm and degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: String,
    pub mpjpe: Stat,
    pub pa_mpjpe: Stat,
    pub yaw: Stat,
    pub per_seed: Vec<EvalScores>,
}

impl AblationRow {
    fn new(config: &str, per_seed: Vec<EvalScores>) -> Self {
        let pick = |f: fn(&EvalScores) -> f64| Stat::of(&per_seed.iter().map(f).collect::<Vec<_>>());
        Self {
            config: config.to_string(),
            mpjpe: pick(|s| s.mpjpe),
            pa_mpjpe: pick(|s| s.pa_mpjpe),
            yaw: pick(|s| s.yaw),
            per_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    /// `neither`, `cs-only`, `ci+cs`.
    pub lifter: Vec<AblationRow>,
    /// `crop`, `full`.
    pub fitter: Vec<AblationRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    /// Ambiguity pairs fitted per seed for the fitter rows.
    pub pairs_per_seed: usize,
    pub fit: FitConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            epochs: 120,
            learning_rate: 1e-3,
            weights: LossWeights { smpl: 1.0, j3d: 1.0, kp2d: 1e-4 },
            pairs_per_seed: 10,
            fit: FitConfig { prior_weight: 0.0, ..FitConfig::default() },
        }
    }
}

/// Scenes for the ablation: a wide field of view puts many people far off
/// the optical axis.
pub fn ablation_scene_config() -> SceneConfig {
    SceneConfig { focal: Some(AMBIGUITY_FOCAL), ..SceneConfig::default() }
}

/// The three lifter variants: `(name, use_bbox_input, loss_frame)`.
pub const LIFTER_VARIANTS: [(&str, bool, LossMode); 3] =
    [("neither", false, LossMode::Crop), ("cs-only", false, LossMode::Full), ("ci+cs", true, LossMode::Full)];

fn scores(pred: &BodyParams, scene: &Scene, person: usize, template: &BodyTemplate) -> Result<EvalScores> {
    let joints = forward_joints(pred, template);
    let gt = scene.gt_joints(person);
    Ok(EvalScores {
        mpjpe: mpjpe(&joints, &gt)?,
        pa_mpjpe: pa_mpjpe(&joints, &gt)?,
        yaw: yaw_error_deg(pred, &scene.persons[person].params()?),
    })
}

fn mean_scores(all: &[EvalScores]) -> EvalScores {
    let n = all.len() as f64;
    EvalScores {
        mpjpe: all.iter().map(|s| s.mpjpe).sum::<f64>() / n,
        pa_mpjpe: all.iter().map(|s| s.pa_mpjpe).sum::<f64>() / n,
        yaw: all.iter().map(|s| s.yaw).sum::<f64>() / n,
    }
}

/// Mean errors of a lifter over every person of `scenes`.
pub fn evaluate_lifter(model: &LifterModel, scenes: &[Scene], template: &BodyTemplate) -> Result<EvalScores> {
    let mut all = Vec::new();
    for scene in scenes {
        for person in 0..scene.persons.len() {
            let pred = model.predict(&lifter_input(scene, person, model.use_bbox_input)?)?;
            all.push(scores(&pred.params, scene, person, template)?);
        }
    }
    if all.is_empty() {
        return Err(Error::InvalidParameter("empty evaluation set".into()));
    }
    Ok(mean_scores(&all))
}

/// One ambiguity pair fitted in both modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub gamma_deg: f64,
    /// Crop-mode fits of the two members are bit-identical.
    pub crop_identical: bool,
    /// Per member `[center, offset]`.
    pub crop: [EvalScores; 2],
    pub full: [EvalScores; 2],
}

impl PairOutcome {
    /// Larger yaw error of the two members. Identical crop fits guarantee
    /// at least `γ/2` here by the triangle inequality.
    pub fn pair_yaw(&self, mode: LossMode) -> f64 {
        let s = match mode {
            LossMode::Crop => &self.crop,
            LossMode::Full => &self.full,
        };
        s[0].yaw.max(s[1].yaw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityStudy {
    pub pairs: Vec<PairOutcome>,
    pub gamma_mean_deg: f64,
    /// Means of [`PairOutcome::pair_yaw`].
    pub crop_yaw_mean: f64,
    pub full_yaw_mean: f64,
    pub all_crop_identical: bool,
}

/// Offset angle of pair `i`, uniform in `range` degrees.
pub fn ambiguity_gamma_deg(seed: u64, i: u64, range: [f64; 2]) -> f64 {
    rng_for(seed, i).random_range(range[0]..=range[1])
}

/// Fits `n` ambiguity pairs with `γx` uniform in `[lo, hi]` degrees.
pub fn ambiguity_study(
    seed: u64,
    n: usize,
    gamma_range_deg: [f64; 2],
    config: &FitConfig,
    template: &BodyTemplate,
) -> Result<AmbiguityStudy> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one pair".into()));
    }
    let pairs: Vec<PairOutcome> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let gamma = ambiguity_gamma_deg(seed, i, gamma_range_deg);
            let pair = gen_ambiguity_pair(derive_seed(seed, i), gamma.to_radians(), template)?;
            let mut out = PairOutcome {
                gamma_deg: gamma,
                crop_identical: false,
                crop: [EvalScores { mpjpe: 0.0, pa_mpjpe: 0.0, yaw: 0.0 }; 2],
                full: [EvalScores { mpjpe: 0.0, pa_mpjpe: 0.0, yaw: 0.0 }; 2],
            };
            let mut crop_fits = Vec::with_capacity(2);
            for (m, scene) in [&pair.scene_center, &pair.scene_offset].into_iter().enumerate() {
                let obs = scene.observation(0, Supervision::KEYPOINTS_ONLY)?;
                for mode in [LossMode::Crop, LossMode::Full] {
                    let r = fit_sample(&obs, &FitConfig { loss_frame: mode, ..*config }, None, template)?;
                    let s = scores(&r.params(), scene, 0, template)?;
                    match mode {
                        LossMode::Crop => {
                            out.crop[m] = s;
                            crop_fits.push((r.pose, r.shape, r.weak));
                        }
                        LossMode::Full => out.full[m] = s,
                    }
                }
            }
            out.crop_identical = crop_fits[0] == crop_fits[1];
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let n = pairs.len() as f64;
    Ok(AmbiguityStudy {
        gamma_mean_deg: pairs.iter().map(|p| p.gamma_deg).sum::<f64>() / n,
        crop_yaw_mean: pairs.iter().map(|p| p.pair_yaw(LossMode::Crop)).sum::<f64>() / n,
        full_yaw_mean: pairs.iter().map(|p| p.pair_yaw(LossMode::Full)).sum::<f64>() / n,
        all_crop_identical: pairs.iter().all(|p| p.crop_identical),
        pairs,
    })
}

/// Ambiguity offsets used by the ablation and the acceptance study, degrees.
pub const GAMMA_RANGE_DEG: [f64; 2] = [5.0, 30.0];

/// Trains every lifter variant on `train` for each seed and scores it on
/// `test`; fits ambiguity pairs in both loss frames for each seed.
pub fn ablate(
    train: &[Scene],
    test: &[Scene],
    seeds: &[u64],
    config: &AblationConfig,
    template: &BodyTemplate,
) -> Result<AblationTable> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("need at least one seed".into()));
    }
    let mut lifter = Vec::new();
    for (name, use_bbox_input, loss_frame) in LIFTER_VARIANTS {
        let fit = FitConfig {
            loss_frame,
            use_bbox_input,
            weights: config.weights,
            step: config.learning_rate,
            ..config.fit
        };
        let per_seed = seeds
            .iter()
            .map(|&seed| {
                let (model, _) = train_lifter(train, &fit, config.epochs, seed, template)?;
                evaluate_lifter(&model, test, template)
            })
            .collect::<Result<Vec<_>>>()?;
        lifter.push(AblationRow::new(name, per_seed));
    }
    let mut fitter = Vec::new();
    if config.pairs_per_seed > 0 {
        let studies = seeds
            .iter()
            .map(|&seed| ambiguity_study(seed, config.pairs_per_seed, GAMMA_RANGE_DEG, &config.fit, template))
            .collect::<Result<Vec<_>>>()?;
        for mode in [LossMode::Crop, LossMode::Full] {
            let per_seed = studies
                .iter()
                .map(|s| {
                    let members: Vec<EvalScores> = s
                        .pairs
                        .iter()
                        .flat_map(|p| match mode {
                            LossMode::Crop => p.crop,
                            LossMode::Full => p.full,
                        })
                        .collect();
                    let mut m = mean_scores(&members);
                    m.yaw = s.pairs.iter().map(|p| p.pair_yaw(mode)).sum::<f64>() / s.pairs.len() as f64;
                    m
                })
                .collect();
            fitter.push(AblationRow::new(if mode == LossMode::Crop { "crop" } else { "full" }, per_seed));
        }
    }
    Ok(AblationTable { lifter, fitter })
}

/// Scenes for the focal sweep: people near the image center.
pub fn focal_sweep_scene_config() -> SceneConfig {
    SceneConfig { lateral_extent: 0.3, ..SceneConfig::default() }
}

/// Focal multipliers swept by default.
pub const DEFAULT_FOCAL_FACTORS: [f64; 9] = [0.05, 0.1, 0.2, 0.4, 0.7, 1.0, 1.5, 2.0, 3.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalSweep {
    pub factors: Vec<f64>,
    /// Mean MPJPE per factor over the successful fits, mm.
    pub mpjpe: Vec<f64>,
    pub failures: Vec<usize>,
}

impl FocalSweep {
    /// Relative MPJPE change against `factor = 1`, if swept.
    pub fn relative_increase(&self, factor: f64) -> Option<f64> {
        let at = |f: f64| self.factors.iter().position(|x| *x == f).map(|i| self.mpjpe[i]);
        Some(at(factor)? / at(1.0)? - 1.0)
    }
}

/// Fits every person with its camera focal multiplied by each factor and
/// reports MPJPE per factor. Priors come from `provider`; keypoints stay
/// as observed.
pub fn focal_sweep(
    scenes: &[Scene],
    factors: &[f64],
    provider: &PriorProvider,
    config: &FitConfig,
    template: &BodyTemplate,
) -> Result<FocalSweep> {
    if factors.is_empty() || factors.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
        return Err(Error::InvalidParameter("factors must be positive and non-empty".into()));
    }
    let mut jobs = Vec::new();
    for (index, scene) in scenes.iter().enumerate() {
        for person in 0..scene.persons.len() {
            jobs.push((index, person, provider.prior(scene, index, person)?));
        }
    }
    let mut mpjpes = Vec::with_capacity(factors.len());
    let mut failures = Vec::with_capacity(factors.len());
    for &factor in factors {
        let errors: Vec<Option<f64>> = jobs
            .par_iter()
            .map(|(index, person, prior)| {
                let scene = &scenes[*index];
                let mut obs = scene.observation(*person, Supervision::KEYPOINTS_ONLY).ok()?;
                obs.camera.focal *= factor;
                let r = fit_sample(&obs, config, Some(prior), template).ok()?;
                mpjpe(&forward_joints(&r.params(), template), &scene.gt_joints(*person)).ok()
            })
            .collect();
        let ok: Vec<f64> = errors.iter().flatten().copied().collect();
        failures.push(errors.len() - ok.len());
        mpjpes.push(if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 });
    }
    Ok(FocalSweep { factors: factors.to_vec(), mpjpe: mpjpes, failures })
}

/// Default focal-sweep fitting: annotator configuration.
pub fn focal_sweep_config() -> FitConfig {
    annotator_config()
}
