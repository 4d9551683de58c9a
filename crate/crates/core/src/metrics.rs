//! MPJPE, PA-MPJPE, PVE and acceleration error.
//!
//! Inputs are in meters, reported values in millimeters (mm/s² for
//! acceleration). Joint 0 is the pelvis.

use nalgebra::{Matrix3, SVD};
use serde::{Deserialize, Serialize};

use crate::body_model::{JointSet, VertexSet};
use crate::{Error, Mat3, Result, Vec3};

pub const DEFAULT_FPS: f64 = 30.0;

/// `x ↦ scale · R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl SimilarityTransform {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        Err(Error::DimensionMismatch {
            expected: b,
            got: a,
        })
    } else {
        Ok(())
    }
}

fn mean_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).sum::<f64>() / a.len() as f64
}

/// Mean joint distance after aligning each set at its pelvis, mm.
pub fn mpjpe(pred: &JointSet, gt: &JointSet) -> Result<f64> {
    check_len(pred.len(), gt.len())?;
    let (pr, gr) = (pred.joints[0], gt.joints[0]);
    let p: Vec<Vec3> = pred.joints.iter().map(|x| x - pr).collect();
    let g: Vec<Vec3> = gt.joints.iter().map(|x| x - gr).collect();
    Ok(1000.0 * mean_distance(&p, &g))
}

/// Least-squares similarity transform taking `pred` onto `gt`.
pub fn procrustes_align(pred: &[Vec3], gt: &[Vec3]) -> Result<(SimilarityTransform, Vec<Vec3>)> {
    check_len(pred.len(), gt.len())?;
    if pred.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 points, got {}",
            pred.len()
        )));
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<Vec3>() / n;
    let mg = gt.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_p = 0.0;
    let mut spread = Matrix3::zeros();
    for (p, g) in pred.iter().zip(gt) {
        let (dp, dg) = (p - mp, g - mg);
        cov += dg * dp.transpose();
        spread += dp * dp.transpose();
        var_p += dp.norm_squared();
    }
    // Collinear (or coincident) source points leave the rotation undetermined.
    let sv = spread.symmetric_eigenvalues();
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if var_p <= 0.0 || sorted[1] <= 1e-12 * sorted[0].max(1e-300) {
        return Err(Error::Degenerate("source points are collinear".into()));
    }
    let svd = SVD::new(cov, true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * vt;
    let s = svd.singular_values;
    let trace = s[0] * d[(0, 0)] + s[1] * d[(1, 1)] + s[2] * d[(2, 2)];
    let scale = trace / var_p;
    if !(scale > 0.0) {
        return Err(Error::Degenerate("non-positive optimal scale".into()));
    }
    let translation = mg - rotation * mp * scale;
    let tf = SimilarityTransform {
        scale,
        rotation,
        translation,
    };
    let aligned = pred.iter().map(|p| tf.apply(p)).collect();
    Ok((tf, aligned))
}

/// MPJPE after Procrustes alignment, mm.
pub fn pa_mpjpe(pred: &JointSet, gt: &JointSet) -> Result<f64> {
    let (_, aligned) = procrustes_align(&pred.joints, &gt.joints)?;
    Ok(1000.0 * mean_distance(&aligned, &gt.joints))
}

/// Mean vertex distance after aligning each mesh at its own root joint, mm.
pub fn pve(pred: &VertexSet, pred_root: &Vec3, gt: &VertexSet, gt_root: &Vec3) -> Result<f64> {
    check_len(pred.len(), gt.len())?;
    let total: f64 = pred
        .vertices
        .iter()
        .zip(&gt.vertices)
        .map(|(p, g)| ((p - pred_root) - (g - gt_root)).norm())
        .sum();
    Ok(1000.0 * total / pred.len() as f64)
}

/// Mean norm of the difference of second temporal differences, mm/s².
pub fn accel_error(pred_seq: &[JointSet], gt_seq: &[JointSet], fps: f64) -> Result<f64> {
    if pred_seq.len() != gt_seq.len() {
        return Err(Error::DimensionMismatch {
            expected: gt_seq.len(),
            got: pred_seq.len(),
        });
    }
    if pred_seq.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "acceleration needs at least 3 frames, got {}",
            pred_seq.len()
        )));
    }
    if !(fps > 0.0) {
        return Err(Error::InvalidParameter(format!("fps must be positive, got {fps}")));
    }
    let k = pred_seq[0].len();
    if pred_seq.iter().chain(gt_seq).any(|s| s.len() != k) {
        return Err(Error::InvalidParameter("joint count varies across frames".into()));
    }
    let mut total = 0.0;
    for t in 1..pred_seq.len() - 1 {
        for j in 0..k {
            let acc = |s: &[JointSet]| s[t + 1].joints[j] - s[t].joints[j] * 2.0 + s[t - 1].joints[j];
            total += (acc(pred_seq) - acc(gt_seq)).norm();
        }
    }
    let count = ((pred_seq.len() - 2) * k) as f64;
    Ok(1000.0 * total / count * fps * fps)
}
