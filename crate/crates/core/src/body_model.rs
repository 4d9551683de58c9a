//! A license-free parametric body with the SMPL interface.
//!
//! Pose is 24 axis-angle rotations (root first, then local rotations along the
//! kinematic tree), shape is 10 linear coefficients. The template is
//! procedurally generated from a fixed seed and shipped as
//! `data/template_v1.json`.
//!
//! The rest pose is expressed in camera-like axes: X to the person's left,
//! Y down, and the person faces -Z, so a zero root rotation places an upright
//! person facing a camera that looks along +Z.

use nalgebra::{Rotation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Mat3, Result, Vec3};

pub const NUM_JOINTS: usize = 24;
pub const NUM_SHAPE: usize = 10;
pub const NUM_POSE: usize = NUM_JOINTS * 3;

/// Seed of the shipped template.
pub const TEMPLATE_SEED: u64 = 0x5EED_B0D1;
pub const TEMPLATE_VERSION: u32 = 1;

const SHIPPED_TEMPLATE: &str = include_str!("../data/template_v1.json");

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

/// SMPL kinematic tree.
pub const SMPL_PARENTS: [Option<usize>; NUM_JOINTS] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(9),
    Some(9),
    Some(12),
    Some(13),
    Some(14),
    Some(16),
    Some(17),
    Some(18),
    Some(19),
    Some(20),
    Some(21),
];

// Anatomical bone offsets (meters) before seeded jitter.
const BASE_OFFSETS: [[f64; 3]; NUM_JOINTS] = [
    [0.0, 0.0, 0.0],
    [0.09, 0.08, -0.01],
    [-0.09, 0.08, -0.01],
    [0.0, -0.11, 0.03],
    [0.01, 0.38, 0.0],
    [-0.01, 0.38, 0.0],
    [0.0, -0.13, 0.0],
    [0.0, 0.40, 0.02],
    [0.0, 0.40, 0.02],
    [0.0, -0.05, -0.01],
    [0.0, 0.05, -0.12],
    [0.0, 0.05, -0.12],
    [0.0, -0.21, 0.02],
    [0.07, -0.12, 0.0],
    [-0.07, -0.12, 0.0],
    [0.0, -0.09, -0.03],
    [0.11, 0.03, 0.0],
    [-0.11, 0.03, 0.0],
    [0.26, 0.0, 0.0],
    [-0.26, 0.0, 0.0],
    [0.25, 0.0, 0.0],
    [-0.25, 0.0, 0.0],
    [0.08, 0.0, 0.0],
    [-0.08, 0.0, 0.0],
];

// Limb radius around each joint (meters).
const SURFACE_RADII: [f64; NUM_JOINTS] = [
    0.12, 0.08, 0.08, 0.12, 0.06, 0.06, 0.13, 0.045, 0.045, 0.13, 0.04, 0.04, 0.06, 0.06, 0.06,
    0.10, 0.055, 0.055, 0.045, 0.045, 0.035, 0.035, 0.04, 0.04,
];

/// Coordinate frame a point set is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    /// Camera-aligned axes, origin at the root joint.
    RootRelative,
    CropCamera,
    FullCamera,
}

/// Pose and shape parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyParams {
    /// Index 0 is the global (root) rotation, the rest are local rotations.
    pub pose: [Vec3; NUM_JOINTS],
    pub shape: [f64; NUM_SHAPE],
}

impl Default for BodyParams {
    fn default() -> Self {
        Self::zero()
    }
}

impl BodyParams {
    pub fn zero() -> Self {
        Self {
            pose: [Vec3::zeros(); NUM_JOINTS],
            shape: [0.0; NUM_SHAPE],
        }
    }

    /// Builds from a flat 72-entry pose and a 10-entry shape.
    pub fn from_slices(pose: &[f64], shape: &[f64]) -> Result<Self> {
        if pose.len() != NUM_POSE {
            return Err(Error::DimensionMismatch {
                expected: NUM_POSE,
                got: pose.len(),
            });
        }
        if shape.len() != NUM_SHAPE {
            return Err(Error::DimensionMismatch {
                expected: NUM_SHAPE,
                got: shape.len(),
            });
        }
        let mut p = Self::zero();
        for (j, chunk) in pose.chunks_exact(3).enumerate() {
            p.pose[j] = Vec3::new(chunk[0], chunk[1], chunk[2]);
        }
        p.shape.copy_from_slice(shape);
        p.validate()?;
        Ok(p)
    }

    pub fn pose_flat(&self) -> Vec<f64> {
        self.pose.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.pose.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.shape.iter().all(|x| x.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidParameter("non-finite body parameter".into()))
        }
    }

    pub fn root_rotation(&self) -> Mat3 {
        rodrigues(&self.pose[0])
    }
}

/// k×3 joints in a tagged frame.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSet {
    pub joints: Vec<Vec3>,
    pub frame: Frame,
}

impl JointSet {
    pub fn new(joints: Vec<Vec3>, frame: Frame) -> Self {
        Self { joints, frame }
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    /// Same points shifted by `t`, re-tagged as `frame`.
    pub fn translated(&self, t: &Vec3, frame: Frame) -> Self {
        Self {
            joints: self.joints.iter().map(|p| p + t).collect(),
            frame,
        }
    }
}

/// Surface points in a tagged frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexSet {
    pub vertices: Vec<Vec3>,
    pub frame: Frame,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }
}

/// A surface point rigidly bound to one joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub joint: usize,
    pub offset: [f64; 3],
}

/// Kinematic tree, rest geometry, linear shape basis and joint regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyTemplate {
    pub parents: Vec<Option<usize>>,
    pub rest_offsets: Vec<Vec3>,
    /// `shape_basis[k][j]`: bone-offset delta of joint `j` per unit of `shape[k]`.
    pub shape_basis: Vec<Vec<Vec3>>,
    pub surface_points: Vec<SurfacePoint>,
    /// k × n_vertices, row-stochastic.
    pub joint_regressor: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TemplateFile {
    version: u32,
    parents: Vec<Option<usize>>,
    rest_offsets: Vec<[f64; 3]>,
    shape_basis: Vec<Vec<[f64; 3]>>,
    surface_points: Vec<SurfacePoint>,
    joint_regressor: Vec<Vec<f64>>,
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl Default for BodyTemplate {
    fn default() -> Self {
        Self::shipped()
    }
}

impl BodyTemplate {
    /// The template shipped with the crate.
    pub fn shipped() -> Self {
        Self::from_json(SHIPPED_TEMPLATE).expect("shipped template is valid")
    }

    /// Deterministically generates a template from `seed`.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parents = SMPL_PARENTS.to_vec();

        let mut rest_offsets = Vec::with_capacity(NUM_JOINTS);
        for (j, base) in BASE_OFFSETS.iter().enumerate() {
            let mut o = Vec3::new(base[0], base[1], base[2]);
            if j != 0 {
                for c in o.iter_mut() {
                    *c += rng.random_range(-0.005..0.005);
                }
            }
            rest_offsets.push(o);
        }

        let max_len = rest_offsets
            .iter()
            .map(|o| o.norm())
            .fold(0.0_f64, f64::max);
        // The pelvis bones (children of the root) stay rigid so the root's
        // orientation is pinned by a shape-independent triangle.
        let mut shape_basis = vec![vec![Vec3::zeros(); NUM_JOINTS]; NUM_SHAPE];
        for row in shape_basis.iter_mut() {
            for j in 1..NUM_JOINTS {
                let len = rest_offsets[j].norm();
                let c = 0.05 * rng.random_range(-1.0..1.0) * len / max_len;
                if parents[j] != Some(0) {
                    row[j] = rest_offsets[j] / len * c;
                }
            }
        }

        let mut surface_points = Vec::with_capacity(NUM_JOINTS * 5);
        let mut rings = Vec::with_capacity(NUM_JOINTS);
        let children = children_of(&parents);
        for j in 0..NUM_JOINTS {
            let child = children[j].first().copied();
            let axis = match child {
                Some(c) => rest_offsets[c].normalize(),
                None if j == 0 => Vec3::new(0.0, -1.0, 0.0),
                None => rest_offsets[j].normalize(),
            };
            let (e1, e2) = orthonormal_pair(&axis);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r = SURFACE_RADII[j];
            let u = (e1 * phi.cos() + e2 * phi.sin()) * r;
            let v = axis.cross(&u);
            let first = surface_points.len();
            for off in [u, -u, v, -v] {
                surface_points.push(SurfacePoint {
                    joint: j,
                    offset: arr(&off),
                });
            }
            let fifth = match child {
                Some(c) => rest_offsets[c] * 0.5 + u * 0.8,
                None => axis * r,
            };
            surface_points.push(SurfacePoint {
                joint: j,
                offset: arr(&fifth),
            });
            rings.push(first..first + 4);
        }
        // Each joint is the centroid of its four antipodal ring points.
        let n = surface_points.len();
        let joint_regressor = rings
            .into_iter()
            .map(|ring| {
                let mut row = vec![0.0; n];
                for i in ring {
                    row[i] = 0.25;
                }
                row
            })
            .collect();

        Self {
            parents,
            rest_offsets,
            shape_basis,
            surface_points,
            joint_regressor,
        }
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.surface_points.len()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: TemplateFile =
            serde_json::from_str(text).map_err(|e| Error::json("<template>", e))?;
        if f.version != TEMPLATE_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported template version {}",
                f.version
            )));
        }
        let t = Self {
            parents: f.parents,
            rest_offsets: f.rest_offsets.iter().map(|a| Vec3::from(*a)).collect(),
            shape_basis: f
                .shape_basis
                .iter()
                .map(|row| row.iter().map(|a| Vec3::from(*a)).collect())
                .collect(),
            surface_points: f.surface_points,
            joint_regressor: f.joint_regressor,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        let f = TemplateFile {
            version: TEMPLATE_VERSION,
            parents: self.parents.clone(),
            rest_offsets: self.rest_offsets.iter().map(arr).collect(),
            shape_basis: self
                .shape_basis
                .iter()
                .map(|row| row.iter().map(arr).collect())
                .collect(),
            surface_points: self.surface_points.clone(),
            joint_regressor: self.joint_regressor.clone(),
        };
        serde_json::to_string_pretty(&f).expect("template serializes")
    }

    /// Checks tree shape, dimensions and regressor stochasticity.
    pub fn validate(&self) -> Result<()> {
        let k = self.parents.len();
        if k != NUM_JOINTS {
            return Err(Error::DimensionMismatch {
                expected: NUM_JOINTS,
                got: k,
            });
        }
        if self.parents[0].is_some() {
            return Err(Error::InvalidParameter("joint 0 must be the root".into()));
        }
        for (j, p) in self.parents.iter().enumerate().skip(1) {
            // Parents precede children, which rules out cycles and extra roots.
            match p {
                Some(p) if *p < j => {}
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "joint {j} has invalid parent {p:?}"
                    )))
                }
            }
        }
        if self.rest_offsets.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: self.rest_offsets.len(),
            });
        }
        if self.shape_basis.len() != NUM_SHAPE || self.shape_basis.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidParameter("shape basis must be 10 × 24".into()));
        }
        if self.surface_points.iter().any(|s| s.joint >= k) {
            return Err(Error::InvalidParameter(
                "surface point bound to unknown joint".into(),
            ));
        }
        let n = self.surface_points.len();
        if self.joint_regressor.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: self.joint_regressor.len(),
            });
        }
        for row in &self.joint_regressor {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|w| *w < 0.0) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(
                    "joint regressor rows must be non-negative and sum to 1".into(),
                ));
            }
        }
        Ok(())
    }

    /// Bone offsets after applying shape coefficients.
    pub fn shaped_offsets(&self, shape: &[f64; NUM_SHAPE]) -> Vec<Vec3> {
        let mut out = self.rest_offsets.clone();
        for (beta, row) in shape.iter().zip(&self.shape_basis) {
            if *beta == 0.0 {
                continue;
            }
            for (o, d) in out.iter_mut().zip(row) {
                *o += d * *beta;
            }
        }
        out
    }
}

fn children_of(parents: &[Option<usize>]) -> Vec<Vec<usize>> {
    let mut c = vec![Vec::new(); parents.len()];
    for (j, p) in parents.iter().enumerate() {
        if let Some(p) = p {
            c[*p].push(j);
        }
    }
    c
}

fn orthonormal_pair(axis: &Vec3) -> (Vec3, Vec3) {
    let helper = if axis.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let e1 = axis.cross(&helper).normalize();
    let e2 = axis.cross(&e1);
    (e1, e2)
}

/// Cross-product matrix of `v`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Exponential map from axis-angle to a rotation matrix.
pub fn rodrigues(v: &Vec3) -> Mat3 {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    // R = I + a K + b K^2 with K = [v]x, a = sin(t)/t, b = (1 - cos t)/t^2
    let a = if theta < 1e-4 {
        1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0
    } else {
        theta.sin() / theta
    };
    let b = if theta < 1e-4 {
        0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0
    } else {
        let h = (0.5 * theta).sin() / theta;
        2.0 * h * h
    };
    let k = skew(v);
    Mat3::identity() + k * a + k * k * b
}

/// Logarithm map: rotation matrix to axis-angle with angle in [0, π].
pub fn rotation_log(r: &Mat3) -> Vec3 {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    q.scaled_axis()
}

/// Geodesic angle between two rotations, radians.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    rotation_log(&(a.transpose() * b)).norm()
}

/// Global transforms (accumulated rotation, joint position) of every joint.
fn global_transforms(params: &BodyParams, template: &BodyTemplate) -> Vec<(Mat3, Vec3)> {
    let offsets = template.shaped_offsets(&params.shape);
    let mut g: Vec<(Mat3, Vec3)> = Vec::with_capacity(NUM_JOINTS);
    for j in 0..template.num_joints() {
        let local = rodrigues(&params.pose[j]);
        match template.parents[j] {
            None => g.push((local, Vec3::zeros())),
            Some(p) => {
                let (rp, tp) = g[p];
                g.push((rp * local, tp + rp * offsets[j]));
            }
        }
    }
    g
}

/// Root-relative joints only (the fast path used by losses).
pub fn forward_joints(params: &BodyParams, template: &BodyTemplate) -> JointSet {
    let g = global_transforms(params, template);
    JointSet::new(g.into_iter().map(|(_, t)| t).collect(), Frame::RootRelative)
}

/// Poses the body: root-relative joints and surface points.
pub fn forward(params: &BodyParams, template: &BodyTemplate) -> (JointSet, VertexSet) {
    let g = global_transforms(params, template);
    let vertices = template
        .surface_points
        .iter()
        .map(|sp| {
            let (r, t) = g[sp.joint];
            t + r * Vec3::from(sp.offset)
        })
        .collect();
    let joints = g.into_iter().map(|(_, t)| t).collect();
    (
        JointSet::new(joints, Frame::RootRelative),
        VertexSet {
            vertices,
            frame: Frame::RootRelative,
        },
    )
}

/// `J = M V`.
pub fn regress_joints(vertices: &VertexSet, template: &BodyTemplate) -> Result<JointSet> {
    let n = template.num_vertices();
    if vertices.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: vertices.len(),
        });
    }
    let joints = template
        .joint_regressor
        .iter()
        .map(|row| {
            row.iter()
                .zip(&vertices.vertices)
                .filter(|(w, _)| **w != 0.0)
                .fold(Vec3::zeros(), |acc, (w, v)| acc + v * *w)
        })
        .collect();
    Ok(JointSet::new(joints, vertices.frame))
}
