//! Per-sample fitting of body and crop-camera parameters to an observation.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::optim::{least_squares, DescentConfig};
use crate::body_model::{forward_joints, rodrigues, rotation_angle_between, rotation_log, BodyParams, BodyTemplate, NUM_POSE, NUM_SHAPE};
use crate::camera::{bbox_rotation, crop_to_full_translation, WeakPerspective, CROP_RESOLUTION};
use crate::losses::{
    push_weighted_residuals, total_loss_with_target, Keypoints2d, LossBreakdown, LossMode, LossWeights, Observation,
    Prediction, SmplTarget,
};
use crate::{Error, Mat3, Result, Vec3};

/// Number of free values: pose, shape and `{s, tx, ty}`.
pub const NUM_FREE: usize = NUM_POSE + NUM_SHAPE + 3;
/// Finite-difference step on pose and shape values.
pub const STEP_BODY: f64 = 1e-5;
/// Finite-difference step on weak-perspective values.
pub const STEP_WEAK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// Rest pose and zero shape, facing the crop camera. In full-frame mode
    /// the root is turned onto the bbox ray, which is known from the bbox.
    ZeroPose,
    /// Start from the prior's parameters.
    Prior,
    /// Start from the prediction handed to [`fit_sample_from`].
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub loss_frame: LossMode,
    /// Feed `[cx/f, cy/f, b/f]` to the lifter; unused by per-sample fitting.
    pub use_bbox_input: bool,
    pub weights: LossWeights,
    pub prior_weight: f64,
    pub max_iters: usize,
    /// Initial damping of the Gauss-Newton step, relative to the curvature diagonal.
    pub step: f64,
    pub tol: f64,
    pub init: InitKind,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            loss_frame: LossMode::Full,
            use_bbox_input: true,
            weights: LossWeights::default(),
            prior_weight: 0.1,
            max_iters: 200,
            step: 1e-3,
            tol: 1e-8,
            init: InitKind::ZeroPose,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.max_iters < 1 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) || !(self.step > 0.0) {
            return Err(Error::InvalidParameter("tol and step must be positive".into()));
        }
        if !(self.prior_weight >= 0.0 && self.prior_weight.is_finite()) {
            return Err(Error::InvalidParameter("prior weight must be finite and non-negative".into()));
        }
        Ok(())
    }

    fn descent(&self) -> DescentConfig {
        DescentConfig {
            max_iters: self.max_iters,
            tol: self.tol,
            damping: self.step,
            ..DescentConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub pose: Vec<f64>,
    pub shape: Vec<f64>,
    pub weak: WeakPerspective,
    /// Root translation in the full camera implied by `weak` and the bbox.
    pub t_full: [f64; 3],
    pub loss_trace: Vec<f64>,
    pub breakdown: LossBreakdown,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl FitReport {
    pub fn params(&self) -> BodyParams {
        BodyParams::from_slices(&self.pose, &self.shape).expect("fit reports hold full parameter vectors")
    }

    pub fn prediction(&self) -> Prediction {
        Prediction { params: self.params(), weak: self.weak }
    }
}

/// Packs a prediction into the free-value vector.
pub fn pack(pred: &Prediction) -> Vec<f64> {
    let mut x = pred.params.pose_flat();
    x.extend_from_slice(&pred.params.shape);
    x.extend_from_slice(&[pred.weak.s, pred.weak.tx, pred.weak.ty]);
    x
}

/// Inverse of [`pack`].
pub fn unpack(x: &[f64]) -> Prediction {
    let params = BodyParams::from_slices(&x[..NUM_POSE], &x[NUM_POSE..NUM_POSE + NUM_SHAPE])
        .expect("slice lengths are fixed");
    let w = &x[NUM_POSE + NUM_SHAPE..];
    Prediction { params, weak: WeakPerspective { s: w[0], tx: w[1], ty: w[2] } }
}

/// Finite-difference steps matching the [`pack`] layout.
pub fn fd_steps() -> Vec<f64> {
    let mut h = vec![STEP_BODY; NUM_POSE + NUM_SHAPE];
    h.extend_from_slice(&[STEP_WEAK; 3]);
    h
}

/// Fitting objective: data terms plus `λ·loss_smpl(params, prior)`.
pub struct Objective<'a> {
    pub mode: LossMode,
    pub weights: LossWeights,
    pub obs: &'a Observation,
    pub target: Option<SmplTarget>,
    pub prior: Option<(f64, SmplTarget)>,
    pub template: &'a BodyTemplate,
}

impl<'a> Objective<'a> {
    pub fn new(config: &FitConfig, obs: &'a Observation, prior: Option<&BodyParams>, template: &'a BodyTemplate) -> Self {
        Self {
            mode: config.loss_frame,
            weights: config.weights,
            obs,
            target: obs.gt_params.as_ref().map(SmplTarget::new),
            prior: prior.filter(|_| config.prior_weight > 0.0).map(|p| (config.prior_weight, SmplTarget::new(p))),
            template,
        }
    }

    pub fn breakdown(&self, pred: &Prediction) -> Result<(LossBreakdown, f64)> {
        let data = match total_loss_with_target(self.mode, &self.weights, pred, self.obs, self.target.as_ref(), self.template) {
            Ok(b) => b,
            // Only the prior is active when no data term applies.
            Err(Error::NoApplicableTerm) if self.prior.is_some() => LossBreakdown::default(),
            Err(e) => return Err(e),
        };
        let reg = self.prior.as_ref().map_or(0.0, |(w, t)| w * t.loss(&pred.params));
        Ok((data, data.total + reg))
    }

    /// Writes the residuals whose squared norm is the objective; `false`
    /// where the prediction is invalid.
    pub fn residuals(&self, x: &[f64], out: &mut Vec<f64>) -> bool {
        let pred = unpack(x);
        if !(pred.weak.s > 0.0) {
            return false;
        }
        if push_weighted_residuals(self.mode, &self.weights, &pred, self.obs, self.target.as_ref(), self.template, out).is_err() {
            return false;
        }
        if let Some((w, t)) = &self.prior {
            t.push_residuals(&pred.params, *w, out);
        }
        !out.is_empty() && out.iter().all(|r| r.is_finite())
    }

    /// Objective value; infinite where the prediction is invalid.
    pub fn value(&self, x: &[f64]) -> f64 {
        let mut r = Vec::new();
        if self.residuals(x, &mut r) {
            r.iter().map(|v| v * v).sum()
        } else {
            f64::INFINITY
        }
    }
}

fn spread(points: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let v = pts.iter().map(|p| (p.0 - mx).powi(2) + (p.1 - my).powi(2)).sum::<f64>() / n;
    (v > 0.0).then(|| v.sqrt())
}

/// Weak-perspective initialization from the keypoint spread and root location.
///
/// Under weak perspective a point `X` lands `(side·s/2)·X` from the crop
/// center, `side` being 224 in the resized crop and `b` in the full image.
pub fn init_weak(mode: LossMode, obs: &Observation, params: &BodyParams, template: &BodyTemplate) -> WeakPerspective {
    let fallback = WeakPerspective { s: 0.9, tx: 0.0, ty: 0.0 };
    let (kp, side, center): (&Keypoints2d, f64, (f64, f64)) = match (mode, &obs.gt_kp2d_crop, &obs.gt_kp2d_full) {
        (LossMode::Crop, Some(k), _) => (k, CROP_RESOLUTION, (0.0, 0.0)),
        (LossMode::Full, _, Some(k)) => (k, obs.bbox.b, (obs.bbox.cx, obs.bbox.cy)),
        _ => return fallback,
    };
    let joints = forward_joints(params, template).joints;
    let visible: Vec<usize> = (0..kp.points.len()).filter(|&i| kp.conf[i] > 0.0).collect();
    let px = spread(visible.iter().map(|&i| (kp.points[i].x, kp.points[i].y)));
    let m = spread(visible.iter().map(|&i| (joints[i].x, joints[i].y)));
    let (Some(px), Some(m)) = (px, m) else { return fallback };
    let s = 2.0 * px / (side * m);
    // Root location from the visible-keypoint centroid minus the body's own centroid.
    let n = visible.len() as f64;
    let (mut ux, mut uy, mut jx, mut jy) = (0.0, 0.0, 0.0, 0.0);
    for &i in &visible {
        ux += kp.points[i].x;
        uy += kp.points[i].y;
        jx += joints[i].x;
        jy += joints[i].y;
    }
    let half = side * s / 2.0;
    WeakPerspective {
        s,
        tx: (ux / n - center.0) / half - jx / n,
        ty: (uy / n - center.1) / half - jy / n,
    }
}

/// Halvings of the initial scale tried while joints sit behind the camera.
const MAX_SCALE_HALVINGS: usize = 40;

/// [`init_weak`] for `params`, with the scale halved (pushing the body
/// deeper) until the objective is finite.
fn admissible(obs: &Observation, config: &FitConfig, prior: Option<&BodyParams>, params: BodyParams, template: &BodyTemplate) -> Prediction {
    let weak = init_weak(config.loss_frame, obs, &params, template);
    let mut pred = Prediction { params, weak };
    let objective = Objective::new(config, obs, prior, template);
    for _ in 0..MAX_SCALE_HALVINGS {
        if objective.value(&pack(&pred)).is_finite() {
            break;
        }
        pred.weak.s /= 2.0;
    }
    pred
}

/// Root yaw offsets tried from a zero-pose start, degrees. The lowest
/// objective wins; ties keep the earlier start.
pub const YAW_STARTS_DEG: [f64; 5] = [0.0, 30.0, -30.0, 60.0, -60.0];

/// Fits one observation from the configured initialization.
pub fn fit_sample(obs: &Observation, config: &FitConfig, prior: Option<&BodyParams>, template: &BodyTemplate) -> Result<FitReport> {
    match config.init {
        InitKind::ZeroPose => {
            let facing = match config.loss_frame {
                LossMode::Full => bbox_rotation(&obs.bbox, obs.camera.focal),
                LossMode::Crop => Mat3::identity(),
            };
            let mut best: Option<FitReport> = None;
            let start = Instant::now();
            for deg in YAW_STARTS_DEG {
                let mut params = BodyParams::zero();
                params.pose[0] = rotation_log(&(rodrigues(&Vec3::new(0.0, deg.to_radians(), 0.0)) * facing));
                let init = admissible(obs, config, prior, params, template);
                let report = fit_sample_from(obs, config, prior, &init, template)?;
                if best.as_ref().is_none_or(|b| report.objective < b.objective) {
                    best = Some(report);
                }
            }
            let mut best = best.expect("at least one start");
            best.wall_time_s = start.elapsed().as_secs_f64();
            Ok(best)
        }
        InitKind::Prior => {
            let params = prior
                .cloned()
                .ok_or_else(|| Error::InvalidParameter("prior initialization without a prior".into()))?;
            let init = admissible(obs, config, prior, params, template);
            fit_sample_from(obs, config, prior, &init, template)
        }
        InitKind::Given => Err(Error::InvalidParameter("given initialization requires fit_sample_from".into())),
    }
}

/// Fits one observation starting at `init`.
pub fn fit_sample_from(
    obs: &Observation,
    config: &FitConfig,
    prior: Option<&BodyParams>,
    init: &Prediction,
    template: &BodyTemplate,
) -> Result<FitReport> {
    config.validate()?;
    obs.validate()?;
    let start = Instant::now();
    let objective = Objective::new(config, obs, prior, template);
    let x0 = pack(init);
    let f0 = objective.value(&x0);
    if !f0.is_finite() {
        // Surface the underlying error when there is one.
        objective.breakdown(init)?;
        return Err(Error::NonFinite(format!("objective {f0} at initialization")));
    }
    let result = least_squares(|x: &[f64], out: &mut Vec<f64>| objective.residuals(x, out), &x0, &fd_steps(), &config.descent());
    let pred = unpack(&result.x);
    let (breakdown, value) = objective.breakdown(&pred)?;
    let t_full = crop_to_full_translation(&pred.weak, &obs.bbox, obs.camera.focal)?.t;
    Ok(FitReport {
        pose: pred.params.pose_flat(),
        shape: pred.params.shape.to_vec(),
        weak: pred.weak,
        t_full: [t_full.x, t_full.y, t_full.z],
        loss_trace: result.trace,
        breakdown,
        objective: value,
        iterations: result.iterations,
        converged: result.converged,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Geodesic angle between two root rotations, degrees.
pub fn yaw_error_deg(pred: &BodyParams, gt: &BodyParams) -> f64 {
    rotation_angle_between(&pred.root_rotation(), &gt.root_rotation()).to_degrees()
}

/// Root translation relative error `|t - t_gt| / |t_gt|`.
pub fn translation_rel_error(t: &[f64; 3], gt: &[f64; 3]) -> f64 {
    (Vec3::from(*t) - Vec3::from(*gt)).norm() / Vec3::from(*gt).norm()
}
