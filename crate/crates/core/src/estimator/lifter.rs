//! Keypoint lifter: a small MLP from normalized crop keypoints (optionally
//! with bbox information) to pose, shape and weak-perspective camera.
//!
//! Loss gradients with respect to the 85 network outputs come from central
//! differences through the body model and projection; everything upstream
//! is exact backpropagation.

use nalgebra::{DMatrixView, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{FitConfig, NUM_FREE, STEP_BODY, STEP_WEAK};
use crate::body_model::{BodyParams, BodyTemplate, NUM_JOINTS, NUM_POSE, NUM_SHAPE};
use crate::camera::{bbox_info, WeakPerspective, CROP_RESOLUTION};
use crate::losses::{total_loss_with_target, LossMode, LossWeights, Observation, Prediction, SmplTarget};
use crate::synthetic::{Scene, Supervision};
use crate::{Error, Result};

pub const HIDDEN: usize = 256;
pub const BATCH_SIZE: usize = 4;
/// Training loss above which a run is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;
/// Smallest training set accepted by [`train_lifter`].
pub const MIN_SAMPLES: usize = 50;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Dense layer; `weights` is column-major with `shape = [outputs, inputs]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub shape: [usize; 2],
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn matrix(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.weights, self.shape[0], self.shape[1])
    }

    fn zeros_like(&self) -> Self {
        Self { shape: self.shape, weights: vec![0.0; self.weights.len()], bias: vec![0.0; self.bias.len()] }
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.matrix() * x + DVector::from_column_slice(&self.bias)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifterModel {
    pub use_bbox_input: bool,
    /// Two tanh hidden layers followed by a linear output layer.
    pub layers: Vec<Dense>,
}

/// Intermediate activations kept for backpropagation.
pub struct Activations {
    input: DVector<f64>,
    hidden: [DVector<f64>; 2],
    pub output: DVector<f64>,
}

/// One training sample: network input plus the observation it is scored on.
pub struct LifterSample {
    pub input: Vec<f64>,
    pub obs: Observation,
    target: Option<SmplTarget>,
}

impl LifterSample {
    pub fn new(input: Vec<f64>, obs: Observation) -> Self {
        let target = obs.gt_params.as_ref().map(SmplTarget::new);
        Self { input, obs, target }
    }
}

/// Network input: crop keypoints scaled to about `[-1, 1]` (zeroed where
/// confidence is zero), then `[cx/f, cy/f, b/f]` when requested.
pub fn lifter_input(scene: &Scene, person: usize, use_bbox_input: bool) -> Result<Vec<f64>> {
    let half = CROP_RESOLUTION / 2.0;
    let kp = &scene.rendered.kp2d_crop[person];
    let conf = &scene.rendered.conf[person];
    let mut x: Vec<f64> = kp
        .iter()
        .zip(conf)
        .flat_map(|(p, c)| if *c > 0.0 { [p[0] / half, p[1] / half] } else { [0.0, 0.0] })
        .collect();
    if use_bbox_input {
        x.extend(bbox_info(&scene.persons[person].bbox, scene.camera.perspective()?.focal));
    }
    Ok(x)
}

/// Expected input width.
pub fn input_width(use_bbox_input: bool) -> usize {
    2 * NUM_JOINTS + if use_bbox_input { 3 } else { 0 }
}

/// Maps raw outputs to a prediction; the scale is `exp` of its output.
pub fn decode(output: &[f64]) -> Prediction {
    let params = BodyParams::from_slices(&output[..NUM_POSE], &output[NUM_POSE..NUM_POSE + NUM_SHAPE])
        .expect("slice lengths are fixed");
    let w = &output[NUM_POSE + NUM_SHAPE..];
    Prediction { params, weak: WeakPerspective { s: w[0].exp(), tx: w[1], ty: w[2] } }
}

fn output_steps() -> [f64; NUM_FREE] {
    let mut h = [STEP_BODY; NUM_FREE];
    h[NUM_POSE + NUM_SHAPE..].fill(STEP_WEAK);
    h
}

impl LifterModel {
    /// Glorot-uniform weights; the output bias starts at `output_bias`.
    pub fn init(use_bbox_input: bool, output_bias: &[f64], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [input_width(use_bbox_input), HIDDEN, HIDDEN, NUM_FREE];
        let layers = (0..3)
            .map(|l| {
                let (n_in, n_out) = (dims[l], dims[l + 1]);
                let limit = (6.0 / (n_in + n_out) as f64).sqrt() * if l == 2 { 0.1 } else { 1.0 };
                let weights = (0..n_in * n_out).map(|_| rng.random_range(-limit..limit)).collect();
                let bias = if l == 2 { output_bias.to_vec() } else { vec![0.0; n_out] };
                Dense { shape: [n_out, n_in], weights, bias }
            })
            .collect();
        Self { use_bbox_input, layers }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [input_width(self.use_bbox_input), HIDDEN, HIDDEN, NUM_FREE];
        if self.layers.len() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, got: self.layers.len() });
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let [rows, cols] = layer.shape;
            if rows != dims[l + 1] || cols != dims[l] {
                return Err(Error::InvalidParameter(format!(
                    "layer {l} has shape {:?}, expected [{}, {}]",
                    layer.shape,
                    dims[l + 1],
                    dims[l]
                )));
            }
            if layer.weights.len() != rows * cols || layer.bias.len() != rows {
                return Err(Error::DimensionMismatch { expected: rows * cols, got: layer.weights.len() });
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Activations {
        let x = DVector::from_column_slice(input);
        let h1 = self.layers[0].apply(&x).map(f64::tanh);
        let h2 = self.layers[1].apply(&h1).map(f64::tanh);
        let output = self.layers[2].apply(&h2);
        Activations { input: x, hidden: [h1, h2], output }
    }

    pub fn predict(&self, input: &[f64]) -> Result<Prediction> {
        if input.len() != input_width(self.use_bbox_input) {
            return Err(Error::DimensionMismatch { expected: input_width(self.use_bbox_input), got: input.len() });
        }
        Ok(decode(self.forward(input).output.as_slice()))
    }

    /// Gradients of `upstream · output` with respect to every weight and bias.
    pub fn backward(&self, act: &Activations, upstream: &[f64]) -> Vec<Dense> {
        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        let mut delta = DVector::from_column_slice(upstream);
        let inputs = [&act.input, &act.hidden[0], &act.hidden[1]];
        for l in (0..3).rev() {
            let g = &mut grads[l];
            let x = inputs[l];
            let cols = g.shape[1];
            for c in 0..cols {
                let col = &mut g.weights[c * g.shape[0]..(c + 1) * g.shape[0]];
                for (w, d) in col.iter_mut().zip(delta.iter()) {
                    *w = d * x[c];
                }
            }
            g.bias.copy_from_slice(delta.as_slice());
            if l > 0 {
                let back = self.layers[l].matrix().tr_mul(&delta);
                delta = back.zip_map(x, |b, h| b * (1.0 - h * h));
            }
        }
        grads
    }

    /// Every weight and bias in [`batch_gradient`] order.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }
}

fn flatten(grads: &[Dense]) -> impl Iterator<Item = f64> + '_ {
    grads.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied())
}

/// Loss of one sample at the given raw outputs.
pub fn sample_loss(
    mode: LossMode,
    weights: &LossWeights,
    output: &[f64],
    sample: &LifterSample,
    template: &BodyTemplate,
) -> Result<f64> {
    let pred = decode(output);
    Ok(total_loss_with_target(mode, weights, &pred, &sample.obs, sample.target.as_ref(), template)?.total)
}

/// Loss and its central-difference gradient with respect to the raw outputs.
pub fn output_gradient(
    mode: LossMode,
    weights: &LossWeights,
    output: &[f64],
    sample: &LifterSample,
    template: &BodyTemplate,
) -> Result<(f64, Vec<f64>)> {
    let value = sample_loss(mode, weights, output, sample, template)?;
    let mut probe = output.to_vec();
    let mut grad = vec![0.0; output.len()];
    for (i, h) in output_steps().into_iter().enumerate() {
        probe[i] = output[i] + h;
        let up = sample_loss(mode, weights, &probe, sample, template)?;
        probe[i] = output[i] - h;
        let down = sample_loss(mode, weights, &probe, sample, template)?;
        probe[i] = output[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    Ok((value, grad))
}

/// Every person of every scene as a fully supervised sample.
pub fn samples_from_scenes(scenes: &[Scene], use_bbox_input: bool) -> Result<Vec<LifterSample>> {
    let mut out = Vec::new();
    for scene in scenes {
        for i in 0..scene.persons.len() {
            out.push(LifterSample::new(lifter_input(scene, i, use_bbox_input)?, scene.observation(i, Supervision::FULL)?));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss after each epoch.
    pub epoch_losses: Vec<f64>,
}

fn mean_loss(model: &LifterModel, config: &FitConfig, samples: &[LifterSample], template: &BodyTemplate) -> Result<f64> {
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| sample_loss(config.loss_frame, &config.weights, model.forward(&s.input).output.as_slice(), s, template))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Mean loss over the samples at `batch`.
pub fn batch_loss(
    model: &LifterModel,
    config: &FitConfig,
    samples: &[LifterSample],
    batch: &[usize],
    template: &BodyTemplate,
) -> Result<f64> {
    let losses: Vec<f64> = batch
        .par_iter()
        .map(|&i| {
            let s = &samples[i];
            sample_loss(config.loss_frame, &config.weights, model.forward(&s.input).output.as_slice(), s, template)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / batch.len() as f64)
}

/// Gradient of [`batch_loss`] with respect to every network parameter, in
/// layer order (weights column-major, then bias).
pub fn batch_gradient(
    model: &LifterModel,
    config: &FitConfig,
    samples: &[LifterSample],
    batch: &[usize],
    template: &BodyTemplate,
) -> Result<Vec<f64>> {
    let per_sample: Vec<Vec<Dense>> = batch
        .par_iter()
        .map(|&i| {
            let s = &samples[i];
            let act = model.forward(&s.input);
            let (_, g) = output_gradient(config.loss_frame, &config.weights, act.output.as_slice(), s, template)?;
            Ok(model.backward(&act, &g))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; model.num_params()];
    for g in &per_sample {
        for (acc, x) in grad.iter_mut().zip(flatten(g)) {
            *acc += x * scale;
        }
    }
    Ok(grad)
}

/// Output bias that starts every prediction at the training-set mean camera.
fn mean_camera_bias(scenes: &[Scene]) -> Vec<f64> {
    let weak: Vec<&WeakPerspective> = scenes.iter().flat_map(|s| s.persons.iter().map(|p| &p.weak)).collect();
    let n = weak.len().max(1) as f64;
    let mut bias = vec![0.0; NUM_FREE];
    bias[NUM_POSE + NUM_SHAPE] = weak.iter().map(|w| w.s.ln()).sum::<f64>() / n;
    bias[NUM_POSE + NUM_SHAPE + 1] = weak.iter().map(|w| w.tx).sum::<f64>() / n;
    bias[NUM_POSE + NUM_SHAPE + 2] = weak.iter().map(|w| w.ty).sum::<f64>() / n;
    bias
}

/// Trains a lifter with Adam on mini-batches; `config.step` is the learning
/// rate, `config.loss_frame` and `config.use_bbox_input` pick the variant.
pub fn train_lifter(
    scenes: &[Scene],
    config: &FitConfig,
    epochs: usize,
    seed: u64,
    template: &BodyTemplate,
) -> Result<(LifterModel, TrainReport)> {
    config.validate()?;
    if epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be at least 1".into()));
    }
    let samples = samples_from_scenes(scenes, config.use_bbox_input)?;
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "training needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let mut model = LifterModel::init(config.use_bbox_input, &mean_camera_bias(scenes), seed);
    // Data problems surface here; failures once training has started mean divergence.
    mean_loss(&model, config, &samples, template)?;
    let n_params = model.num_params();
    let (mut m, mut v) = (vec![0.0; n_params], vec![0.0; n_params]);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut step = 0i32;
    let mut epoch_losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(BATCH_SIZE) {
            let grad = batch_gradient(&model, config, &samples, batch, template)
                .map_err(|_| Error::Diverged { epoch, loss: f64::INFINITY })?;
            step += 1;
            let (c1, c2) = (1.0 - ADAM_BETA1.powi(step), 1.0 - ADAM_BETA2.powi(step));
            for (((p, g), m), v) in model.params_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *p -= config.step * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            }
        }
        let loss = mean_loss(&model, config, &samples, template).unwrap_or(f64::INFINITY);
        epoch_losses.push(loss);
        if !(loss <= DIVERGENCE_LOSS) {
            return Err(Error::Diverged { epoch, loss });
        }
    }
    Ok((model, TrainReport { epoch_losses }))
}
