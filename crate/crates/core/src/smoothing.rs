//! OneEuro temporal filtering of per-frame joint estimates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_model::JointSet;
use crate::metrics::{accel_error, mpjpe};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneEuroConfig {
    /// Hz.
    pub min_cutoff: f64,
    /// Cutoff gain per unit of filtered speed.
    pub beta: f64,
    /// Hz, for the derivative low-pass.
    pub d_cutoff: f64,
    pub fps: f64,
}

impl Default for OneEuroConfig {
    fn default() -> Self {
        Self { min_cutoff: 1.0, beta: 0.5, d_cutoff: 1.0, fps: crate::metrics::DEFAULT_FPS }
    }
}

impl OneEuroConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.min_cutoff, self.d_cutoff, self.fps].iter().all(|v| *v > 0.0 && v.is_finite());
        if !positive || !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "OneEuro needs min_cutoff, d_cutoff, fps > 0 and beta >= 0, got {self:?}"
            )));
        }
        Ok(())
    }

    fn alpha(&self, cutoff: f64) -> f64 {
        let tau = 1.0 / (std::f64::consts::TAU * cutoff);
        1.0 / (1.0 + tau * self.fps)
    }
}

/// Filters a sequence of vectors. The cutoff adapts to the norm of the
/// low-passed derivative; a scalar channel is a sequence of 1-vectors.
pub fn oneeuro_filter(seq: &[Vec<f64>], config: &OneEuroConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let Some(first) = seq.first() else {
        return Ok(Vec::new());
    };
    let dim = first.len();
    if let Some(bad) = seq.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let a_d = config.alpha(config.d_cutoff);
    let mut out = Vec::with_capacity(seq.len());
    let mut x_hat = first.clone();
    let mut dx_hat = vec![0.0; dim];
    out.push(x_hat.clone());
    for x in &seq[1..] {
        for c in 0..dim {
            let dx = (x[c] - x_hat[c]) * config.fps;
            dx_hat[c] = a_d * dx + (1.0 - a_d) * dx_hat[c];
        }
        let speed = dx_hat.iter().map(|d| d * d).sum::<f64>().sqrt();
        let a = config.alpha(config.min_cutoff + config.beta * speed);
        for c in 0..dim {
            x_hat[c] = a * x[c] + (1.0 - a) * x_hat[c];
        }
        out.push(x_hat.clone());
    }
    Ok(out)
}

/// Scalar convenience wrapper around [`oneeuro_filter`].
pub fn oneeuro_filter_scalar(seq: &[f64], config: &OneEuroConfig) -> Result<Vec<f64>> {
    let wrapped: Vec<Vec<f64>> = seq.iter().map(|v| vec![*v]).collect();
    Ok(oneeuro_filter(&wrapped, config)?.into_iter().map(|v| v[0]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    /// Per frame, per joint, meters.
    pub smoothed: Vec<Vec<[f64; 3]>>,
    /// Against the reference; absent for sequences shorter than three frames.
    pub accel_before: Option<f64>,
    pub accel_after: Option<f64>,
    /// Mean per-frame MPJPE against the reference, mm.
    pub mpjpe_before: f64,
    pub mpjpe_after: f64,
}

/// Filters every joint coordinate of `pred` as an independent channel and
/// compares acceleration and MPJPE errors against `reference`.
pub fn smooth_sequence(pred: &[JointSet], reference: &[JointSet], config: &OneEuroConfig) -> Result<SmoothingReport> {
    config.validate()?;
    if pred.len() != reference.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), got: pred.len() });
    }
    let Some(first) = pred.first() else {
        return Err(Error::InvalidParameter("empty sequence".into()));
    };
    let k = first.len();
    if let Some(bad) = pred.iter().chain(reference).find(|s| s.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, got: bad.len() });
    }
    let channels: Vec<Vec<f64>> = (0..k * 3)
        .into_par_iter()
        .map(|ch| {
            let seq: Vec<f64> = pred.iter().map(|f| f.joints[ch / 3][ch % 3]).collect();
            oneeuro_filter_scalar(&seq, config)
        })
        .collect::<Result<_>>()?;
    let smoothed: Vec<JointSet> = (0..pred.len())
        .map(|t| {
            let joints = (0..k)
                .map(|j| Vec3::new(channels[3 * j][t], channels[3 * j + 1][t], channels[3 * j + 2][t]))
                .collect();
            JointSet::new(joints, pred[t].frame)
        })
        .collect();
    let mean_mpjpe = |seq: &[JointSet]| -> Result<f64> {
        let total = seq.iter().zip(reference).map(|(p, g)| mpjpe(p, g)).sum::<Result<f64>>()?;
        Ok(total / seq.len() as f64)
    };
    let accel = |seq: &[JointSet]| -> Result<Option<f64>> {
        if seq.len() < 3 {
            return Ok(None);
        }
        accel_error(seq, reference, config.fps).map(Some)
    };
    Ok(SmoothingReport {
        accel_before: accel(pred)?,
        accel_after: accel(&smoothed)?,
        mpjpe_before: mean_mpjpe(pred)?,
        mpjpe_after: mean_mpjpe(&smoothed)?,
        smoothed: smoothed
            .iter()
            .map(|s| s.joints.iter().map(|p| [p.x, p.y, p.z]).collect())
            .collect(),
    })
}
