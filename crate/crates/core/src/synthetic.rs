//! Synthetic scenes: people placed in front of a full-frame camera, their
//! keypoints rendered in the full image and in the resized crop, plus the
//! two-scene construction whose crops are indistinguishable.
//!
//! Crop keypoints are rendered through the crop camera rotated onto the bbox
//! center (focal `f·r/b`), not by resampling an axis-aligned crop.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::body_model::{
    forward_joints, rotation_log, BodyParams, BodyTemplate, Frame, JointSet, NUM_JOINTS,
};
use crate::camera::{
    crop_rotation, full_pixel_to_crop, full_to_weak, project, project_to_crop, BBox,
    PerspectiveCamera, WeakPerspective,
};
use crate::losses::{Keypoints2d, Observation};
use crate::{Error, Mat3, Result, Vec2, Vec3};

/// Rejection attempts before a person is declared out of frustum.
pub const MAX_ATTEMPTS: usize = 100;
/// Bbox half-size over the largest projected joint offset from the root.
pub const BBOX_INFLATION: f64 = 1.1;
/// Focal used for ambiguity pairs, wide enough to keep 30° offsets in frame.
pub const AMBIGUITY_FOCAL: f64 = 1000.0;

/// Independent generator for item `index` under `seed`.
pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Seed of the `index`-th scene of a dataset generated with `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    rng_for(seed, index).next_u64()
}

/// Full camera as stored in scene files; principal point at the image center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneCamera {
    pub width: f64,
    pub height: f64,
    pub focal: f64,
}

impl SceneCamera {
    pub fn perspective(&self) -> Result<PerspectiveCamera> {
        PerspectiveCamera::new(self.focal, self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub pose: Vec<f64>,
    pub shape: Vec<f64>,
    pub t_full: [f64; 3],
    pub bbox: BBox,
    pub weak: WeakPerspective,
}

impl Person {
    pub fn params(&self) -> Result<BodyParams> {
        BodyParams::from_slices(&self.pose, &self.shape)
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::from(self.t_full)
    }
}

/// Ground-truth renderings, one entry per person.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Rendered {
    pub kp3d_full: Vec<Vec<[f64; 3]>>,
    pub kp2d_full: Vec<Vec<[f64; 2]>>,
    pub kp2d_crop: Vec<Vec<[f64; 2]>>,
    pub conf: Vec<Vec<f64>>,
}

/// Annotation written back by the annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoGt {
    pub pose: Vec<f64>,
    pub shape: Vec<f64>,
    pub t_full: [f64; 3],
    pub weak: WeakPerspective,
    pub prior: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub camera: SceneCamera,
    pub persons: Vec<Person>,
    pub rendered: Rendered,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_gt: Option<Vec<Option<PseudoGt>>>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.camera.perspective()?;
        let n = self.persons.len();
        let r = &self.rendered;
        for len in [r.kp3d_full.len(), r.kp2d_full.len(), r.kp2d_crop.len(), r.conf.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        for (i, p) in self.persons.iter().enumerate() {
            p.params()?;
            p.bbox.validate()?;
            p.weak.validate()?;
            for len in [r.kp3d_full[i].len(), r.kp2d_full[i].len(), r.kp2d_crop[i].len(), r.conf[i].len()] {
                if len != NUM_JOINTS {
                    return Err(Error::DimensionMismatch { expected: NUM_JOINTS, got: len });
                }
            }
        }
        Ok(())
    }

    /// Ground-truth root-relative joints of person `i`.
    pub fn gt_joints(&self, i: usize) -> JointSet {
        let kp = &self.rendered.kp3d_full[i];
        let root = Vec3::from(kp[0]);
        JointSet::new(kp.iter().map(|p| Vec3::from(*p) - root).collect(), Frame::RootRelative)
    }

    pub fn kp2d_full(&self, i: usize) -> Keypoints2d {
        keypoints(&self.rendered.kp2d_full[i], &self.rendered.conf[i])
    }

    pub fn kp2d_crop(&self, i: usize) -> Keypoints2d {
        keypoints(&self.rendered.kp2d_crop[i], &self.rendered.conf[i])
    }

    /// Observation of person `i` carrying the requested terms.
    pub fn observation(&self, i: usize, sup: Supervision) -> Result<Observation> {
        let p = &self.persons[i];
        Ok(Observation {
            gt_params: sup.params.then(|| p.params()).transpose()?,
            gt_joints3d: sup.joints3d.then(|| self.gt_joints(i)),
            gt_kp2d_full: sup.kp2d.then(|| self.kp2d_full(i)),
            gt_kp2d_crop: sup.kp2d.then(|| self.kp2d_crop(i)),
            bbox: p.bbox,
            camera: self.camera.perspective()?,
        })
    }
}

fn keypoints(points: &[[f64; 2]], conf: &[f64]) -> Keypoints2d {
    Keypoints2d {
        points: points.iter().map(|p| Vec2::from(*p)).collect(),
        conf: conf.to_vec(),
    }
}

/// Which ground-truth terms an observation exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Supervision {
    pub params: bool,
    pub joints3d: bool,
    pub kp2d: bool,
}

impl Supervision {
    pub const KEYPOINTS_ONLY: Self = Self { params: false, joints3d: false, kp2d: true };
    pub const FULL: Self = Self { params: true, joints3d: true, kp2d: true };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub n_persons: usize,
    /// Per-component bound on local joint rotations, radians.
    pub pose_range: f64,
    /// Bound on the global yaw, radians.
    pub yaw_range: f64,
    pub shape_range: f64,
    pub depth_range: [f64; 2],
    pub width: f64,
    pub height: f64,
    /// `None` uses the diagonal estimate.
    pub focal: Option<f64>,
    /// Fraction of the half-extents the root may be placed in.
    pub lateral_extent: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_persons: 1,
            pose_range: 0.3,
            yaw_range: std::f64::consts::FRAC_PI_4,
            shape_range: 1.0,
            depth_range: [4.0, 8.0],
            width: 1920.0,
            height: 1080.0,
            focal: None,
            lateral_extent: 0.8,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.n_persons == 0 {
            return bad("n_persons must be at least 1");
        }
        if !(self.pose_range >= 0.0 && self.yaw_range >= 0.0 && self.shape_range >= 0.0) {
            return bad("ranges must be non-negative");
        }
        let [lo, hi] = self.depth_range;
        if !(lo > 0.0 && hi >= lo) {
            return bad("depth range must satisfy 0 < lo <= hi");
        }
        if !(self.lateral_extent >= 0.0 && self.lateral_extent <= 1.0) {
            return bad("lateral extent must lie in [0, 1]");
        }
        self.camera().map(|_| ())
    }

    pub fn camera(&self) -> Result<PerspectiveCamera> {
        match self.focal {
            Some(f) => PerspectiveCamera::new(f, self.width, self.height),
            None => PerspectiveCamera::with_estimated_focal(self.width, self.height),
        }
    }
}

fn uniform(rng: &mut impl Rng, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

fn axis_rotation(axis: usize, angle: f64) -> Mat3 {
    crate::body_model::rodrigues(&(Vec3::ith(axis, 1.0) * angle))
}

/// Random body with global rotation `R_y(yaw) R_x(pitch) R_z(roll)`.
pub fn sample_params(rng: &mut impl Rng, config: &SceneConfig) -> BodyParams {
    let mut params = BodyParams::zero();
    let yaw = uniform(rng, config.yaw_range);
    let pitch = uniform(rng, 0.1);
    let roll = uniform(rng, 0.1);
    let root = axis_rotation(1, yaw) * axis_rotation(0, pitch) * axis_rotation(2, roll);
    params.pose[0] = rotation_log(&root);
    for v in params.pose.iter_mut().skip(1) {
        *v = Vec3::new(
            uniform(rng, config.pose_range),
            uniform(rng, config.pose_range),
            uniform(rng, config.pose_range),
        );
    }
    for b in params.shape.iter_mut() {
        *b = uniform(rng, config.shape_range);
    }
    params
}

/// Square box on the projected root whose half-size is the largest
/// per-axis joint offset from the root, inflated by [`BBOX_INFLATION`].
pub fn bbox_around_root(kp2d_full: &[Vec2]) -> BBox {
    let root = kp2d_full[0];
    let half = kp2d_full
        .iter()
        .map(|p| (p - root).amax())
        .fold(0.0, f64::max);
    BBox {
        cx: root.x,
        cy: root.y,
        b: 2.0 * BBOX_INFLATION * half,
    }
}

/// Renders joints of `params` at `t_full`: `(kp3d_full, kp2d_full, kp2d_crop)`.
pub fn render_keypoints(
    params: &BodyParams,
    t_full: &Vec3,
    bbox: &BBox,
    camera: &PerspectiveCamera,
    template: &BodyTemplate,
) -> Result<(Vec<Vec3>, Vec<Vec2>, Vec<Vec2>)> {
    let kp3d: Vec<Vec3> = forward_joints(params, template)
        .joints
        .iter()
        .map(|j| j + t_full)
        .collect();
    let full = project(&kp3d, camera)?;
    let crop = project_to_crop(&kp3d, bbox, camera.focal)?;
    Ok((kp3d, full, crop))
}

fn arr3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn arr2(v: &Vec2) -> [f64; 2] {
    [v.x, v.y]
}

fn push_person(
    scene: &mut Scene,
    params: &BodyParams,
    t: &Vec3,
    bbox: BBox,
    kp3d: &[Vec3],
    full: &[Vec2],
    crop: &[Vec2],
) -> Result<()> {
    let weak = full_to_weak(t, &bbox, scene.camera.focal)?;
    scene.persons.push(Person {
        pose: params.pose_flat(),
        shape: params.shape.to_vec(),
        t_full: arr3(t),
        bbox,
        weak,
    });
    let r = &mut scene.rendered;
    r.kp3d_full.push(kp3d.iter().map(arr3).collect());
    r.kp2d_full.push(full.iter().map(arr2).collect());
    r.kp2d_crop.push(crop.iter().map(arr2).collect());
    r.conf.push(vec![1.0; kp3d.len()]);
    Ok(())
}

/// One scene, deterministic in `seed`.
pub fn gen_scene(seed: u64, config: &SceneConfig, template: &BodyTemplate) -> Result<Scene> {
    config.validate()?;
    let camera = config.camera()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = Scene {
        camera: SceneCamera { width: camera.width, height: camera.height, focal: camera.focal },
        persons: Vec::with_capacity(config.n_persons),
        rendered: Rendered::default(),
        seed,
        pseudo_gt: None,
    };
    for _ in 0..config.n_persons {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let params = sample_params(&mut rng, config);
            let [lo, hi] = config.depth_range;
            let z = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let u = uniform(&mut rng, 0.5 * config.lateral_extent * camera.width);
            let v = uniform(&mut rng, 0.5 * config.lateral_extent * camera.height);
            let t = Vec3::new(u * z / camera.focal, v * z / camera.focal, z);
            let kp3d: Vec<Vec3> = forward_joints(&params, template).joints.iter().map(|j| j + t).collect();
            let Ok(full) = project(&kp3d, &camera) else { continue };
            if !full.iter().all(|p| camera.contains(p)) {
                continue;
            }
            let bbox = bbox_around_root(&full);
            let Ok(crop) = project_to_crop(&kp3d, &bbox, camera.focal) else { continue };
            push_person(&mut scene, &params, &t, bbox, &kp3d, &full, &crop)?;
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::OutOfFrustum(MAX_ATTEMPTS));
        }
    }
    Ok(scene)
}

/// `n` scenes; scene `i` is generated from `derive_seed(seed, i)`.
pub fn gen_dataset(seed: u64, n: usize, config: &SceneConfig, template: &BodyTemplate) -> Result<Vec<Scene>> {
    use rayon::prelude::*;
    (0..n)
        .into_par_iter()
        .map(|i| gen_scene(derive_seed(seed, i as u64), config, template))
        .collect()
}

/// Two single-person scenes with identical crop observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityPair {
    pub scene_center: Scene,
    pub scene_offset: Scene,
    pub gamma: (f64, f64),
}

/// Person on the optical axis and its copy rotated by `crop_rotation(γx, 0)`
/// about the camera center. Both share one bbox size.
pub fn gen_ambiguity_pair(seed: u64, gamma_x: f64, template: &BodyTemplate) -> Result<AmbiguityPair> {
    if !(gamma_x.abs() < std::f64::consts::FRAC_PI_3) {
        return Err(Error::InvalidParameter(format!("|gamma_x| must be below 60 degrees, got {gamma_x}")));
    }
    let config = SceneConfig {
        focal: Some(AMBIGUITY_FOCAL),
        yaw_range: std::f64::consts::FRAC_PI_6,
        depth_range: [3.0, 6.0],
        ..SceneConfig::default()
    };
    let camera = config.camera()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rot = crop_rotation(gamma_x, 0.0);
    for _ in 0..MAX_ATTEMPTS {
        let center = sample_params(&mut rng, &config);
        let [lo, hi] = config.depth_range;
        let t_c = Vec3::new(0.0, 0.0, rng.random_range(lo..=hi));
        let mut offset = center.clone();
        if gamma_x != 0.0 {
            offset.pose[0] = rotation_log(&(rot * center.root_rotation()));
        }
        let t_o = rot * t_c;

        let kp_c: Vec<Vec3> = forward_joints(&center, template).joints.iter().map(|j| j + t_c).collect();
        let kp_o: Vec<Vec3> = forward_joints(&offset, template).joints.iter().map(|j| j + t_o).collect();
        let (Ok(full_c), Ok(full_o)) = (project(&kp_c, &camera), project(&kp_o, &camera)) else { continue };
        if !full_c.iter().chain(&full_o).all(|p| camera.contains(p)) {
            continue;
        }
        let (bc, bo) = (bbox_around_root(&full_c), bbox_around_root(&full_o));
        let b = bc.b.max(bo.b);
        let bbox_c = BBox { b, ..bc };
        let bbox_o = BBox { b, ..bo };
        let crop_c = project_to_crop(&kp_c, &bbox_c, camera.focal)?;
        let crop_o = project_to_crop(&kp_o, &bbox_o, camera.focal)?;
        let gap = crop_c.iter().zip(&crop_o).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        if gap > 1e-9 {
            return Err(Error::Degenerate(format!("crop renderings differ by {gap} px")));
        }
        let make = |params: &BodyParams, t: &Vec3, bbox: BBox, kp: &[Vec3], full: &[Vec2]| -> Result<Scene> {
            let mut scene = Scene {
                camera: SceneCamera { width: camera.width, height: camera.height, focal: camera.focal },
                persons: Vec::new(),
                rendered: Rendered::default(),
                seed,
                pseudo_gt: None,
            };
            // Both members store the same crop rendering so crop observations agree bit for bit.
            push_person(&mut scene, params, t, bbox, kp, full, &crop_c)?;
            Ok(scene)
        };
        return Ok(AmbiguityPair {
            scene_center: make(&center, &t_c, bbox_c, &kp_c, &full_c)?,
            scene_offset: make(&offset, &t_o, bbox_o, &kp_o, &full_o)?,
            gamma: (gamma_x, 0.0),
        });
    }
    Err(Error::OutOfFrustum(MAX_ATTEMPTS))
}

/// Gaussian pixel noise on the full-image keypoints, mapped into the crop
/// through the crop camera; each keypoint is dropped with `drop_prob`.
pub fn add_noise(scene: &Scene, sigma_px: f64, drop_prob: f64, seed: u64) -> Result<Scene> {
    if !(sigma_px >= 0.0) || !(0.0..=1.0).contains(&drop_prob) {
        return Err(Error::InvalidParameter(format!(
            "need sigma >= 0 and drop probability in [0, 1], got {sigma_px}, {drop_prob}"
        )));
    }
    let normal = Normal::new(0.0, sigma_px).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = scene.clone();
    let focal = scene.camera.focal;
    for (i, person) in scene.persons.iter().enumerate() {
        for j in 0..scene.rendered.kp2d_full[i].len() {
            let dx = normal.sample(&mut rng);
            let dy = normal.sample(&mut rng);
            let dropped = rng.random::<f64>() < drop_prob;
            if sigma_px > 0.0 {
                let p = Vec2::from(scene.rendered.kp2d_full[i][j]) + Vec2::new(dx, dy);
                let c = full_pixel_to_crop(&p, &person.bbox, focal)
                    .ok_or(Error::BehindCamera { index: j, z: 0.0 })?;
                out.rendered.kp2d_full[i][j] = arr2(&p);
                out.rendered.kp2d_crop[i][j] = arr2(&c);
            }
            if dropped {
                out.rendered.conf[i][j] = 0.0;
            }
        }
    }
    Ok(out)
}

/// A person moving smoothly in front of the full camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSequence {
    pub fps: f64,
    /// Per frame: full-camera joints in meters.
    pub joints: Vec<Vec<[f64; 3]>>,
}

impl MotionSequence {
    pub fn joint_sets(&self) -> Vec<JointSet> {
        to_joint_sets(&self.joints)
    }
}

/// Wraps per-frame coordinate arrays as full-camera joint sets.
pub fn to_joint_sets(frames: &[Vec<[f64; 3]>]) -> Vec<JointSet> {
    frames
        .iter()
        .map(|f| JointSet::new(f.iter().map(|p| Vec3::from(*p)).collect(), Frame::FullCamera))
        .collect()
}

/// Smooth motion: every pose component oscillates sinusoidally around a
/// random body while the root walks at constant velocity.
pub fn gen_motion(seed: u64, frames: usize, fps: f64, template: &BodyTemplate) -> Result<MotionSequence> {
    if frames == 0 || !(fps > 0.0) {
        return Err(Error::InvalidParameter(format!("need frames >= 1 and fps > 0, got {frames}, {fps}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = sample_params(&mut rng, &SceneConfig::default());
    let waves: Vec<[f64; 3]> = (0..NUM_JOINTS * 3)
        .map(|_| {
            [
                rng.random_range(0.0..0.15),
                rng.random_range(0.2..0.8) * std::f64::consts::TAU,
                rng.random_range(0.0..std::f64::consts::TAU),
            ]
        })
        .collect();
    let t0 = Vec3::new(uniform(&mut rng, 1.0), uniform(&mut rng, 0.2), rng.random_range(4.0..7.0));
    let velocity = Vec3::new(uniform(&mut rng, 0.5), 0.0, uniform(&mut rng, 0.3));
    let joints = (0..frames)
        .map(|i| {
            let time = i as f64 / fps;
            let mut params = base.clone();
            for (j, v) in params.pose.iter_mut().enumerate() {
                for c in 0..3 {
                    let [amp, omega, phase] = waves[3 * j + c];
                    v[c] += amp * (omega * time + phase).sin();
                }
            }
            let t = t0 + velocity * time;
            forward_joints(&params, template).joints.iter().map(|p| arr3(&(p + t))).collect()
        })
        .collect();
    Ok(MotionSequence { fps, joints })
}

/// Adds independent Gaussian noise of `sigma` meters to every joint coordinate.
pub fn jitter_joints(seq: &MotionSequence, sigma: f64, seed: u64) -> Result<MotionSequence> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = seq.clone();
    for p in out.joints.iter_mut().flatten() {
        for c in p.iter_mut() {
            *c += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_model::rotation_angle_between;
    use crate::camera::{crop_to_full_translation, project_point, weak_project_to_full};
    use crate::losses::loss_2d_crop;
    use approx::assert_abs_diff_eq;

    fn template() -> BodyTemplate {
        BodyTemplate::shipped()
    }

    #[test]
    fn same_seed_same_scene() {
        let t = template();
        let c = SceneConfig { n_persons: 3, ..SceneConfig::default() };
        let a = gen_scene(11, &c, &t).unwrap();
        let b = gen_scene(11, &c, &t).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_ne!(a, gen_scene(12, &c, &t).unwrap());
    }

    #[test]
    fn fixed_depth_range() {
        let t = template();
        let c = SceneConfig { n_persons: 4, depth_range: [5.0, 5.0], ..SceneConfig::default() };
        let s = gen_scene(3, &c, &t).unwrap();
        assert!(s.persons.iter().all(|p| p.t_full[2] == 5.0));
    }

    #[test]
    fn centered_person_weak_round_trip() {
        let t_full = Vec3::new(0.0, 0.0, 5.0);
        let bbox = BBox { cx: 0.0, cy: 0.0, b: 300.0 };
        let weak = full_to_weak(&t_full, &bbox, 1000.0).unwrap();
        let back = crop_to_full_translation(&weak, &bbox, 1000.0).unwrap().t;
        assert!((back - t_full).norm() <= 1e-9 * t_full.norm());
    }

    #[test]
    fn persons_satisfy_translation_round_trip() {
        let t = template();
        let c = SceneConfig { n_persons: 2, ..SceneConfig::default() };
        for s in gen_dataset(5, 20, &c, &t).unwrap() {
            let cam = s.camera.perspective().unwrap();
            for (i, p) in s.persons.iter().enumerate() {
                let t_full = crop_to_full_translation(&p.weak, &p.bbox, cam.focal).unwrap().t;
                let root = project_point(&t_full, &cam).unwrap();
                let rendered = Vec2::from(s.rendered.kp2d_full[i][0]);
                assert!((root - rendered).norm() <= 1e-9 * rendered.norm().max(1.0));
                let weak_root = weak_project_to_full(&p.weak, &p.bbox);
                assert!((weak_root - rendered).norm() <= 1e-9 * rendered.norm().max(1.0));
            }
        }
    }

    #[test]
    fn bbox_encloses_joints_with_margin() {
        let t = template();
        let c = SceneConfig { n_persons: 2, ..SceneConfig::default() };
        for s in gen_dataset(6, 30, &c, &t).unwrap() {
            for (i, p) in s.persons.iter().enumerate() {
                let half = p.bbox.b / 2.0;
                for kp in &s.rendered.kp2d_full[i] {
                    let d = (Vec2::from(*kp) - p.bbox.center()).amax();
                    assert!(d <= half / 1.05, "joint {d} vs half-size {half}");
                }
            }
        }
    }

    #[test]
    fn crop_rendering_examples() {
        let t = template();
        let cam = PerspectiveCamera::new(1000.0, 1920.0, 1080.0).unwrap();
        let params = BodyParams::zero();
        let t_full = Vec3::new(0.0, 0.0, 5.0);
        let bbox = BBox { cx: 0.0, cy: 0.0, b: 400.0 };
        let (_, full, crop) = render_keypoints(&params, &t_full, &bbox, &cam, &t).unwrap();
        assert_eq!(full[0], Vec2::zeros());
        assert_eq!(crop[0], Vec2::zeros());
        let big = BBox { b: 800.0, ..bbox };
        let (_, _, crop2) = render_keypoints(&params, &t_full, &big, &cam, &t).unwrap();
        for (a, b) in crop.iter().zip(&crop2) {
            assert_abs_diff_eq!(*a * 0.5, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn crop_root_is_inverse_weak_mapping() {
        let t = template();
        let s = gen_scene(21, &SceneConfig { n_persons: 3, ..SceneConfig::default() }, &t).unwrap();
        for (i, p) in s.persons.iter().enumerate() {
            let full_root = weak_project_to_full(&p.weak, &p.bbox);
            // Inverse of the weak mapping: crop pixels of the root.
            let inv = (full_root - p.bbox.center()) * (224.0 / p.bbox.b);
            let crop_root = Vec2::from(s.rendered.kp2d_crop[i][0]);
            assert!((inv - crop_root).norm() <= 1e-9);
        }
    }

    #[test]
    fn behind_camera_is_reported() {
        let t = template();
        let cam = PerspectiveCamera::new(1000.0, 640.0, 480.0).unwrap();
        let bbox = BBox { cx: 0.0, cy: 0.0, b: 100.0 };
        let r = render_keypoints(&BodyParams::zero(), &Vec3::new(0.0, 0.0, -3.0), &bbox, &cam, &t);
        assert!(matches!(r, Err(Error::BehindCamera { .. })));
    }

    #[test]
    fn impossible_config_runs_out_of_attempts() {
        let t = template();
        // A tiny image cannot contain a person at 0.5 m.
        let c = SceneConfig { depth_range: [0.5, 0.5], width: 10.0, height: 10.0, focal: Some(1000.0), ..SceneConfig::default() };
        assert!(matches!(gen_scene(1, &c, &t), Err(Error::OutOfFrustum(MAX_ATTEMPTS))));
    }

    #[test]
    fn ambiguity_pair_properties() {
        let t = template();
        let zero = gen_ambiguity_pair(4, 0.0, &t).unwrap();
        assert_eq!(zero.scene_center, zero.scene_offset);

        for (seed, deg) in [(1u64, 20.0f64), (2, 5.0), (3, 30.0), (4, -25.0)] {
            let g = deg.to_radians();
            let pair = gen_ambiguity_pair(seed, g, &t).unwrap();
            let (c, o) = (&pair.scene_center, &pair.scene_offset);
            let rc = c.persons[0].params().unwrap().root_rotation();
            let ro = o.persons[0].params().unwrap().root_rotation();
            assert!((ro - crop_rotation(g, 0.0) * rc).amax() < 1e-12);
            assert!((rotation_angle_between(&ro, &rc) - g.abs()).abs() < 1e-9);
            assert_eq!(c.rendered.kp2d_crop, o.rendered.kp2d_crop);
            let fresh = project_to_crop(
                &o.rendered.kp3d_full[0].iter().map(|p| Vec3::from(*p)).collect::<Vec<_>>(),
                &o.persons[0].bbox,
                o.camera.focal,
            )
            .unwrap();
            for (a, b) in fresh.iter().zip(&c.rendered.kp2d_crop[0]) {
                assert!((a - Vec2::from(*b)).amax() <= 1e-9);
            }
            let max_full = c.rendered.kp2d_full[0]
                .iter()
                .zip(&o.rendered.kp2d_full[0])
                .map(|(a, b)| (Vec2::from(*a) - Vec2::from(*b)).norm())
                .fold(0.0, f64::max);
            assert!(max_full > 0.0);

            let pred = c.persons[0].params().unwrap();
            let joints = forward_joints(&pred, &t);
            let w = WeakPerspective { s: 0.8, tx: 0.01, ty: -0.02 };
            let la = loss_2d_crop(&joints, &w, &c.kp2d_crop(0)).unwrap();
            let lb = loss_2d_crop(&joints, &w, &o.kp2d_crop(0)).unwrap();
            assert!((la - lb).abs() <= 1e-12 * la.max(1.0));
        }
        assert!(gen_ambiguity_pair(1, 1.2, &t).is_err());
    }

    #[test]
    fn noise_examples() {
        let t = template();
        let s = gen_scene(8, &SceneConfig::default(), &t).unwrap();
        assert_eq!(add_noise(&s, 0.0, 0.0, 1).unwrap(), s);
        let dropped = add_noise(&s, 0.0, 1.0, 1).unwrap();
        assert!(dropped.rendered.conf.iter().flatten().all(|c| *c == 0.0));
        assert_eq!(add_noise(&s, 2.0, 0.3, 5).unwrap(), add_noise(&s, 2.0, 0.3, 5).unwrap());
        assert!(add_noise(&s, -1.0, 0.0, 1).is_err());
        assert!(add_noise(&s, 1.0, 1.5, 1).is_err());
    }

    #[test]
    fn noise_has_requested_spread() {
        let t = template();
        let c = SceneConfig { n_persons: 5, ..SceneConfig::default() };
        let scenes = gen_dataset(9, 50, &c, &t).unwrap();
        let mut residuals = Vec::new();
        for (k, s) in scenes.iter().enumerate() {
            let noisy = add_noise(s, 2.0, 0.0, 100 + k as u64).unwrap();
            for (a, b) in s.rendered.kp2d_full.iter().flatten().zip(noisy.rendered.kp2d_full.iter().flatten()) {
                residuals.push(b[0] - a[0]);
                residuals.push(b[1] - a[1]);
            }
        }
        assert!(residuals.len() >= 10_000);
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let std = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((std - 2.0).abs() <= 0.1, "std {std}");
    }

    #[test]
    fn noisy_crop_matches_noisy_full() {
        let t = template();
        let s = gen_scene(10, &SceneConfig::default(), &t).unwrap();
        let n = add_noise(&s, 3.0, 0.0, 2).unwrap();
        let p = &n.persons[0];
        for (f, c) in n.rendered.kp2d_full[0].iter().zip(&n.rendered.kp2d_crop[0]) {
            let mapped = full_pixel_to_crop(&Vec2::from(*f), &p.bbox, n.camera.focal).unwrap();
            assert_eq!(mapped, Vec2::from(*c));
        }
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let t = template();
        let s = gen_scene(13, &SceneConfig { n_persons: 2, ..SceneConfig::default() }, &t).unwrap();
        let text = serde_json::to_string_pretty(&s).unwrap();
        let back: Scene = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["camera", "persons", "rendered", "seed"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v.get("pseudo_gt").is_none());
        let p = &v["persons"][0];
        assert_eq!(p["pose"].as_array().unwrap().len(), 72);
        assert_eq!(p["shape"].as_array().unwrap().len(), 10);
        for key in ["width", "height", "focal"] {
            assert!(v["camera"].get(key).is_some());
        }
        for key in ["kp3d_full", "kp2d_full", "kp2d_crop", "conf"] {
            assert!(v["rendered"].get(key).is_some());
        }
    }

    #[test]
    fn observation_exposes_requested_terms() {
        let t = template();
        let s = gen_scene(14, &SceneConfig::default(), &t).unwrap();
        let o = s.observation(0, Supervision::KEYPOINTS_ONLY).unwrap();
        assert!(o.gt_params.is_none() && o.gt_joints3d.is_none());
        assert!(o.gt_kp2d_full.is_some() && o.gt_kp2d_crop.is_some());
        let o = s.observation(0, Supervision::FULL).unwrap();
        assert_eq!(o.gt_params.unwrap(), s.persons[0].params().unwrap());
        assert_eq!(o.gt_joints3d.unwrap().joints[0], Vec3::zeros());
    }

    #[test]
    fn motion_is_smooth_and_deterministic() {
        let t = template();
        let a = gen_motion(4, 60, 30.0, &t).unwrap();
        assert_eq!(a, gen_motion(4, 60, 30.0, &t).unwrap());
        assert_eq!(a.joints.len(), 60);
        // Frame-to-frame displacement stays well under 10 cm at 30 fps.
        let sets = a.joint_sets();
        for w in sets.windows(2) {
            for (p, q) in w[0].joints.iter().zip(&w[1].joints) {
                assert!((p - q).norm() < 0.1);
            }
        }
        assert!(gen_motion(4, 0, 30.0, &t).is_err());
    }

    #[test]
    fn jitter_has_requested_spread() {
        let t = template();
        let a = gen_motion(5, 200, 30.0, &t).unwrap();
        let b = jitter_joints(&a, 0.01, 9).unwrap();
        let d: Vec<f64> = a.joints.iter().flatten().zip(b.joints.iter().flatten())
            .flat_map(|(p, q)| (0..3).map(move |c| q[c] - p[c]))
            .collect();
        let std = (d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt();
        assert!((std / 0.01 - 1.0).abs() < 0.05, "{std}");
        assert_eq!(jitter_joints(&a, 0.0, 9).unwrap(), a);
    }
}
