//! Training and fitting objectives: parameter, 3D joint and 2D reprojection
//! losses, with the 2D term evaluated either in the resized crop or in the
//! full image.
//!
//! Every term is a mean of squared residuals. Rotations are compared as
//! rotation-matrix elements so that axis-angle wrap-around does not register
//! as an error.

use serde::{Deserialize, Serialize};

use crate::body_model::{forward_joints, rodrigues, BodyParams, BodyTemplate, Frame, JointSet, NUM_JOINTS};
use crate::camera::{
    crop_to_full_translation, project_point, weak_to_persp_crop, BBox, PerspectiveCamera,
    WeakPerspective, F_HMR,
};
use crate::{Error, Mat3, Result, Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub smpl: f64,
    pub j3d: f64,
    pub kp2d: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            smpl: 1.0,
            j3d: 1.0,
            kp2d: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.smpl, self.j3d, self.kp2d]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid loss weights {self:?}")))
        }
    }
}

/// Frame in which the 2D reprojection term is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    Crop,
    Full,
}

impl std::str::FromStr for LossMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crop" => Ok(LossMode::Crop),
            "full" => Ok(LossMode::Full),
            other => Err(Error::InvalidParameter(format!("unknown loss mode {other:?}"))),
        }
    }
}

/// 2D keypoints with per-keypoint confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoints2d {
    pub points: Vec<Vec2>,
    pub conf: Vec<f64>,
}

impl Keypoints2d {
    pub fn confident(points: Vec<Vec2>) -> Self {
        let conf = vec![1.0; points.len()];
        Self { points, conf }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.conf.len() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                got: self.conf.len(),
            });
        }
        if self.conf.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidParameter("confidence outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Ground truth available for one person.
#[derive(Debug, Clone)]
pub struct Observation {
    pub gt_params: Option<BodyParams>,
    /// Root-relative 3D joints.
    pub gt_joints3d: Option<JointSet>,
    pub gt_kp2d_full: Option<Keypoints2d>,
    pub gt_kp2d_crop: Option<Keypoints2d>,
    pub bbox: BBox,
    pub camera: PerspectiveCamera,
}

impl Observation {
    pub fn validate(&self) -> Result<()> {
        if self.gt_params.is_none()
            && self.gt_joints3d.is_none()
            && self.gt_kp2d_full.is_none()
            && self.gt_kp2d_crop.is_none()
        {
            return Err(Error::NoApplicableTerm);
        }
        for kp in [&self.gt_kp2d_full, &self.gt_kp2d_crop].into_iter().flatten() {
            kp.validate()?;
        }
        self.bbox.validate()?;
        self.camera.validate()
    }
}

/// Predicted body and crop camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub params: BodyParams,
    pub weak: WeakPerspective,
}

/// Per-term values; absent terms are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub smpl: Option<f64>,
    pub j3d: Option<f64>,
    pub kp2d_crop: Option<f64>,
    pub kp2d_full: Option<f64>,
    pub total: f64,
}

/// Parameter target with rotations precomputed.
#[derive(Debug, Clone)]
pub struct SmplTarget {
    rotations: [Mat3; NUM_JOINTS],
    shape: [f64; 10],
}

impl SmplTarget {
    pub fn new(gt: &BodyParams) -> Self {
        let mut rotations = [Mat3::zeros(); NUM_JOINTS];
        for (r, v) in rotations.iter_mut().zip(&gt.pose) {
            *r = rodrigues(v);
        }
        Self {
            rotations,
            shape: gt.shape,
        }
    }

    /// Appends `sqrt(weight)`-scaled residuals whose squared norm is `weight · loss`.
    pub fn push_residuals(&self, pred: &BodyParams, weight: f64, out: &mut Vec<f64>) {
        let a = (weight / (NUM_JOINTS * 9) as f64).sqrt();
        for (v, r) in pred.pose.iter().zip(&self.rotations) {
            out.extend((rodrigues(v) - r).iter().map(|d| a * d));
        }
        let b = (weight / self.shape.len() as f64).sqrt();
        out.extend(pred.shape.iter().zip(&self.shape).map(|(p, g)| b * (p - g)));
    }

    pub fn loss(&self, pred: &BodyParams) -> f64 {
        let pose: f64 = pred
            .pose
            .iter()
            .zip(&self.rotations)
            .map(|(v, r)| (rodrigues(v) - r).norm_squared())
            .sum::<f64>()
            / (NUM_JOINTS * 9) as f64;
        let shape: f64 = pred
            .shape
            .iter()
            .zip(&self.shape)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / self.shape.len() as f64;
        pose + shape
    }
}

/// Mean squared rotation-matrix difference plus mean squared shape difference.
pub fn loss_smpl(pred: &BodyParams, gt: &BodyParams) -> f64 {
    SmplTarget::new(gt).loss(pred)
}

/// Mean squared distance between pelvis-centered joint sets, m².
pub fn loss_3d(pred: &JointSet, gt: &JointSet) -> Result<f64> {
    if pred.frame != gt.frame {
        return Err(Error::FrameMismatch(pred.frame, gt.frame));
    }
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: gt.len(),
            got: pred.len(),
        });
    }
    let (pr, gr) = (pred.joints[0], gt.joints[0]);
    let sum: f64 = pred
        .joints
        .iter()
        .zip(&gt.joints)
        .map(|(p, g)| ((p - pr) - (g - gr)).norm_squared())
        .sum();
    Ok(sum / pred.len() as f64)
}

fn weighted_2d(
    joints: &[Vec3],
    t: &Vec3,
    camera: &PerspectiveCamera,
    gt: &Keypoints2d,
) -> Result<f64> {
    if joints.len() != gt.points.len() || gt.conf.len() != gt.points.len() {
        return Err(Error::DimensionMismatch {
            expected: joints.len(),
            got: gt.points.len(),
        });
    }
    let mut sum = 0.0;
    for (index, ((j, g), c)) in joints.iter().zip(&gt.points).zip(&gt.conf).enumerate() {
        let p = j + t;
        let proj = project_point(&p, camera).ok_or(Error::BehindCamera { index, z: p.z })?;
        if *c != 0.0 {
            sum += c * (proj - g).norm_squared();
        }
    }
    Ok(sum / joints.len() as f64)
}

/// Reprojection error in the resized crop through the `f = 5000` virtual camera.
pub fn loss_2d_crop(pred_joints: &JointSet, weak: &WeakPerspective, gt: &Keypoints2d) -> Result<f64> {
    let t = weak_to_persp_crop(weak)?;
    let cam = PerspectiveCamera::crop_virtual();
    debug_assert_eq!(cam.focal, F_HMR);
    weighted_2d(&pred_joints.joints, &t.t, &cam, gt)
}

/// Reprojection error in the full image after lifting the crop translation
/// into the full camera.
pub fn loss_2d_full(
    pred_joints: &JointSet,
    weak: &WeakPerspective,
    bbox: &BBox,
    camera: &PerspectiveCamera,
    gt: &Keypoints2d,
) -> Result<f64> {
    let t = crop_to_full_translation(weak, bbox, camera.focal)?;
    weighted_2d(&pred_joints.joints, &t.t, camera, gt)
}

/// Weighted sum of the applicable terms.
pub fn total_loss(
    mode: LossMode,
    weights: &LossWeights,
    pred: &Prediction,
    obs: &Observation,
    template: &BodyTemplate,
) -> Result<LossBreakdown> {
    let target = obs.gt_params.as_ref().map(SmplTarget::new);
    total_loss_with_target(mode, weights, pred, obs, target.as_ref(), template)
}

/// [`total_loss`] with a precomputed parameter target (hot loops).
pub fn total_loss_with_target(
    mode: LossMode,
    weights: &LossWeights,
    pred: &Prediction,
    obs: &Observation,
    target: Option<&SmplTarget>,
    template: &BodyTemplate,
) -> Result<LossBreakdown> {
    let mut out = LossBreakdown::default();
    let mut any = false;
    if let Some(t) = target {
        out.smpl = Some(t.loss(&pred.params));
        out.total += weights.smpl * out.smpl.unwrap();
        any = true;
    }
    let kp2d = match mode {
        LossMode::Crop => obs.gt_kp2d_crop.as_ref(),
        LossMode::Full => obs.gt_kp2d_full.as_ref(),
    };
    if obs.gt_joints3d.is_none() && kp2d.is_none() {
        return if any { Ok(out) } else { Err(Error::NoApplicableTerm) };
    }
    let joints = forward_joints(&pred.params, template);
    if let Some(gt) = &obs.gt_joints3d {
        let v = loss_3d(&joints, gt)?;
        out.j3d = Some(v);
        out.total += weights.j3d * v;
    }
    if let Some(gt) = kp2d {
        match mode {
            LossMode::Crop => {
                let v = loss_2d_crop(&joints, &pred.weak, gt)?;
                out.kp2d_crop = Some(v);
                out.total += weights.kp2d * v;
            }
            LossMode::Full => {
                let v = loss_2d_full(&joints, &pred.weak, &obs.bbox, &obs.camera, gt)?;
                out.kp2d_full = Some(v);
                out.total += weights.kp2d * v;
            }
        }
    }
    Ok(out)
}

/// Residual vector whose squared norm equals the weighted total of
/// [`total_loss_with_target`]; absent terms contribute nothing.
pub fn push_weighted_residuals(
    mode: LossMode,
    weights: &LossWeights,
    pred: &Prediction,
    obs: &Observation,
    target: Option<&SmplTarget>,
    template: &BodyTemplate,
    out: &mut Vec<f64>,
) -> Result<()> {
    if let Some(t) = target {
        t.push_residuals(&pred.params, weights.smpl, out);
    }
    let kp2d = match mode {
        LossMode::Crop => obs.gt_kp2d_crop.as_ref(),
        LossMode::Full => obs.gt_kp2d_full.as_ref(),
    };
    if obs.gt_joints3d.is_none() && kp2d.is_none() {
        return Ok(());
    }
    let joints = forward_joints(&pred.params, template);
    let k = joints.len() as f64;
    if let Some(gt) = &obs.gt_joints3d {
        if gt.frame != joints.frame {
            return Err(Error::FrameMismatch(joints.frame, gt.frame));
        }
        if gt.len() != joints.len() {
            return Err(Error::DimensionMismatch { expected: gt.len(), got: joints.len() });
        }
        let a = (weights.j3d / k).sqrt();
        let (pr, gr) = (joints.joints[0], gt.joints[0]);
        for (p, g) in joints.joints.iter().zip(&gt.joints) {
            let d = (p - pr) - (g - gr);
            out.extend([a * d.x, a * d.y, a * d.z]);
        }
    }
    if let Some(gt) = kp2d {
        if gt.points.len() != joints.len() || gt.conf.len() != gt.points.len() {
            return Err(Error::DimensionMismatch { expected: joints.len(), got: gt.points.len() });
        }
        let (t, cam) = match mode {
            LossMode::Crop => (weak_to_persp_crop(&pred.weak)?.t, PerspectiveCamera::crop_virtual()),
            LossMode::Full => (crop_to_full_translation(&pred.weak, &obs.bbox, obs.camera.focal)?.t, obs.camera),
        };
        for (index, ((j, g), c)) in joints.joints.iter().zip(&gt.points).zip(&gt.conf).enumerate() {
            let p = j + t;
            let proj = project_point(&p, &cam).ok_or(Error::BehindCamera { index, z: p.z })?;
            let a = (weights.kp2d * c / k).sqrt();
            out.extend([a * (proj.x - g.x), a * (proj.y - g.y)]);
        }
    }
    Ok(())
}

/// Crop keypoints the crop loss would consider exact for `pred`.
pub fn render_crop_virtual(pred: &Prediction, template: &BodyTemplate) -> Result<Keypoints2d> {
    let joints = forward_joints(&pred.params, template);
    let t = weak_to_persp_crop(&pred.weak)?;
    let cam = PerspectiveCamera::crop_virtual();
    let pts = joints
        .joints
        .iter()
        .enumerate()
        .map(|(index, j)| {
            let p = j + t.t;
            project_point(&p, &cam).ok_or(Error::BehindCamera { index, z: p.z })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Keypoints2d::confident(pts))
}

/// Full-image keypoints the full loss would consider exact for `pred`.
pub fn render_full(pred: &Prediction, bbox: &BBox, camera: &PerspectiveCamera, template: &BodyTemplate) -> Result<Keypoints2d> {
    let joints = forward_joints(&pred.params, template);
    let t = crop_to_full_translation(&pred.weak, bbox, camera.focal)?;
    let pts = joints
        .joints
        .iter()
        .enumerate()
        .map(|(index, j)| {
            let p = j + t.t;
            project_point(&p, camera).ok_or(Error::BehindCamera { index, z: p.z })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Keypoints2d::confident(pts))
}

/// Root-relative joints tagged the way `loss_3d` expects.
pub fn root_relative(joints: &JointSet) -> JointSet {
    let r = joints.joints[0];
    JointSet::new(joints.joints.iter().map(|p| p - r).collect(), Frame::RootRelative)
}
