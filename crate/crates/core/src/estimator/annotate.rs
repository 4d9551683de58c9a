//! Pseudo-ground-truth annotation: a prior prediction per person, refined by
//! prior-regularized fitting to the 2D keypoints.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_sample, FitConfig, FitReport, InitKind};
use super::lifter::{lifter_input, LifterModel};
use crate::body_model::{rodrigues, rotation_log, BodyParams, BodyTemplate};
use crate::synthetic::{rng_for, PseudoGt, Scene, Supervision};
use crate::{Error, Result, Vec3};

/// Source of the prior parameters for each person.
#[derive(Debug, Clone)]
pub enum PriorProvider {
    /// Ground truth with every joint rotation composed with a random rotation
    /// of fixed angle (radians).
    PerturbedGt { angle: f64, seed: u64 },
    /// Rest pose, zero shape.
    Zero,
    /// A trained lifter applied to the crop keypoints.
    Lifter(Box<LifterModel>),
}

impl PriorProvider {
    pub fn describe(&self) -> String {
        match self {
            PriorProvider::PerturbedGt { angle, seed } => {
                format!("perturbed-gt(angle_deg={}, seed={seed})", angle.to_degrees())
            }
            PriorProvider::Zero => "zero".to_string(),
            PriorProvider::Lifter(m) => format!("lifter(use_bbox_input={})", m.use_bbox_input),
        }
    }

    /// Prior for person `person` of scene number `index`.
    pub fn prior(&self, scene: &Scene, index: usize, person: usize) -> Result<BodyParams> {
        match self {
            PriorProvider::PerturbedGt { angle, seed } => {
                let mut rng = rng_for(*seed, (index as u64) << 16 | person as u64);
                Ok(perturb_params(&scene.persons[person].params()?, *angle, &mut rng))
            }
            PriorProvider::Zero => Ok(BodyParams::zero()),
            PriorProvider::Lifter(m) => {
                Ok(m.predict(&lifter_input(scene, person, m.use_bbox_input)?)?.params)
            }
        }
    }
}

/// Composes every joint rotation with a rotation of `angle` about a uniformly
/// random axis; shape is left untouched.
pub fn perturb_params(params: &BodyParams, angle: f64, rng: &mut ChaCha8Rng) -> BodyParams {
    let mut out = params.clone();
    for v in out.pose.iter_mut() {
        let axis = loop {
            let a = Vec3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng));
            if a.norm() > 1e-9 {
                break a.normalize();
            }
        };
        *v = rotation_log(&(rodrigues(&(axis * angle)) * rodrigues(v)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFailure {
    pub scene: usize,
    pub person: usize,
    pub error: String,
}

/// Record of how the annotation was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub prior: String,
    pub config: FitConfig,
    pub annotated: usize,
    pub failures: Vec<AnnotationFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    /// Input scenes with `pseudo_gt` filled in.
    pub scenes: Vec<Scene>,
    /// Priors used, per scene and person.
    pub priors: Vec<Vec<BodyParams>>,
    pub provenance: Provenance,
}

/// Annotates every person from 2D keypoints only. A failing person is
/// recorded and left without pseudo-ground truth; the rest proceed.
pub fn annotate_dataset(
    scenes: &[Scene],
    provider: &PriorProvider,
    config: &FitConfig,
    template: &BodyTemplate,
) -> Result<Annotation> {
    config.validate()?;
    let label = provider.describe();
    type Outcome = (Result<BodyParams>, Result<FitReport>);
    let outcomes: Vec<Vec<Outcome>> = scenes
        .par_iter()
        .enumerate()
        .map(|(index, scene)| {
            (0..scene.persons.len())
                .map(|person| {
                    let prior = provider.prior(scene, index, person);
                    let report = match &prior {
                        Ok(p) => scene
                            .observation(person, Supervision::KEYPOINTS_ONLY)
                            .and_then(|obs| fit_sample(&obs, config, Some(p), template)),
                        Err(e) => Err(Error::InvalidParameter(format!("no prior: {e}"))),
                    };
                    (prior, report)
                })
                .collect()
        })
        .collect();

    let mut out_scenes = scenes.to_vec();
    let mut priors = Vec::with_capacity(scenes.len());
    let mut failures = Vec::new();
    let mut annotated = 0;
    for (index, (scene, results)) in out_scenes.iter_mut().zip(outcomes).enumerate() {
        let mut pseudo = Vec::with_capacity(results.len());
        let mut scene_priors = Vec::with_capacity(results.len());
        for (person, (prior, report)) in results.into_iter().enumerate() {
            scene_priors.push(prior.unwrap_or_else(|_| BodyParams::zero()));
            match report {
                Ok(r) => {
                    annotated += 1;
                    pseudo.push(Some(PseudoGt {
                        pose: r.pose,
                        shape: r.shape,
                        t_full: r.t_full,
                        weak: r.weak,
                        prior: label.clone(),
                    }));
                }
                Err(e) => {
                    failures.push(AnnotationFailure { scene: index, person, error: e.to_string() });
                    pseudo.push(None);
                }
            }
        }
        scene.pseudo_gt = Some(pseudo);
        priors.push(scene_priors);
    }
    Ok(Annotation {
        scenes: out_scenes,
        priors,
        provenance: Provenance { prior: label, config: *config, annotated, failures },
    })
}

/// Default annotator configuration: full-frame loss, prior initialization.
pub fn annotator_config() -> FitConfig {
    FitConfig { init: InitKind::Prior, ..FitConfig::default() }
}
