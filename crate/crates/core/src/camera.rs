//! Camera algebra linking the crop-level weak-perspective camera to the
//! full-frame perspective camera.
//!
//! Pixel coordinates are relative to the image center. Bounding boxes are
//! square crops of side `b` centered at `(cx, cy)`, resized to
//! [`CROP_RESOLUTION`] pixels before they reach a regressor.

use serde::{Deserialize, Serialize};

use crate::body_model::Frame;
use crate::{Error, Mat3, Result, Vec2, Vec3};

/// Side of the resized square crop, pixels.
pub const CROP_RESOLUTION: f64 = 224.0;
/// Focal length of the virtual crop camera, pixels.
pub const F_HMR: f64 = 5000.0;

/// Read-only access to the crop constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropConstants {
    pub r: f64,
    pub f_hmr: f64,
}

impl CropConstants {
    pub const DEFAULT: CropConstants = CropConstants {
        r: CROP_RESOLUTION,
        f_hmr: F_HMR,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveCamera {
    pub focal: f64,
    /// Principal point relative to the image center.
    pub principal: Vec2,
    pub width: f64,
    pub height: f64,
}

impl PerspectiveCamera {
    pub fn new(focal: f64, width: f64, height: f64) -> Result<Self> {
        let cam = Self {
            focal,
            principal: Vec2::zeros(),
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera with the diagonal focal estimate.
    pub fn with_estimated_focal(width: f64, height: f64) -> Result<Self> {
        Self::new(estimate_focal(width, height), width, height)
    }

    /// The virtual camera of the resized crop.
    pub fn crop_virtual() -> Self {
        Self {
            focal: F_HMR,
            principal: Vec2::zeros(),
            width: CROP_RESOLUTION,
            height: CROP_RESOLUTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "focal must be positive, got {}",
                self.focal
            )));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "image size must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// True if a center-relative pixel lies inside the image.
    pub fn contains(&self, p: &Vec2) -> bool {
        p.x.abs() <= 0.5 * self.width && p.y.abs() <= 0.5 * self.height
    }

    pub fn with_focal(&self, focal: f64) -> Self {
        Self { focal, ..*self }
    }
}

/// `{s, tx, ty}`: scale and root translation in the crop camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakPerspective {
    pub s: f64,
    pub tx: f64,
    pub ty: f64,
}

impl WeakPerspective {
    pub fn new(s: f64, tx: f64, ty: f64) -> Result<Self> {
        let w = Self { s, tx, ty };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s > 0.0 && self.s.is_finite() && self.tx.is_finite() && self.ty.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "weak-perspective scale must be positive and finite, got {:?}",
                self
            )))
        }
    }
}

/// Square crop: center relative to the full image center and original side length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub b: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, b: f64) -> Result<Self> {
        let bb = Self { cx, cy, b };
        bb.validate()?;
        Ok(bb)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b > 0.0 && self.b.is_finite() && self.cx.is_finite() && self.cy.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "bbox size must be positive, got {:?}",
                self
            )))
        }
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.cx, self.cy)
    }
}

/// Root translation tagged with the camera it is expressed in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootTranslation {
    pub t: Vec3,
    pub frame: Frame,
}

/// Diagonal focal estimate `sqrt(w^2 + h^2)`.
pub fn estimate_focal(width: f64, height: f64) -> f64 {
    width.hypot(height)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

/// Weak-perspective parameters to the crop camera's root translation.
pub fn weak_to_persp_crop(weak: &WeakPerspective) -> Result<RootTranslation> {
    check_positive("s", weak.s)?;
    Ok(RootTranslation {
        t: Vec3::new(weak.tx, weak.ty, 2.0 * F_HMR / (CROP_RESOLUTION * weak.s)),
        frame: Frame::CropCamera,
    })
}

/// `[cx/f, cy/f, b/f]`.
pub fn bbox_info(bbox: &BBox, focal: f64) -> [f64; 3] {
    [bbox.cx / focal, bbox.cy / focal, bbox.b / focal]
}

/// Angles of the crop-center ray: `tan γx = cx/f`, `tan γy = cy/f`.
pub fn gamma_angles(bbox: &BBox, focal: f64) -> (f64, f64) {
    ((bbox.cx / focal).atan(), (bbox.cy / focal).atan())
}

/// Rotation taking the crop camera into the full camera.
///
/// Yaw by `gamma_x` about Y, then elevation about the rotated X axis so that
/// the optical axis lands on the ray `(tan γx, tan γy, 1)`. The elevation is
/// `atan(tan γy · cos γx)`, which equals `gamma_y` when `gamma_x = 0`. The
/// rotated X axis stays in the full camera's XZ plane (no roll).
pub fn crop_rotation(gamma_x: f64, gamma_y: f64) -> Mat3 {
    let elevation = (gamma_y.tan() * gamma_x.cos()).atan();
    let (sy, cy) = gamma_x.sin_cos();
    let (sp, cp) = elevation.sin_cos();
    let yaw = Mat3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    // Rotation about X by -elevation: tilts +Z towards +Y (image down).
    let pitch = Mat3::new(1.0, 0.0, 0.0, 0.0, cp, sp, 0.0, -sp, cp);
    yaw * pitch
}

/// Crop-camera rotation for a bounding box under focal `f`.
pub fn bbox_rotation(bbox: &BBox, focal: f64) -> Mat3 {
    let (gx, gy) = gamma_angles(bbox, focal);
    crop_rotation(gx, gy)
}

/// Root translation in the full camera from crop-level weak perspective.
///
/// `tX = tx + 2cx/(b s)`, `tY = ty + 2cy/(b s)`, `tZ = 2f/(b s)`.
pub fn crop_to_full_translation(
    weak: &WeakPerspective,
    bbox: &BBox,
    focal: f64,
) -> Result<RootTranslation> {
    check_positive("s", weak.s)?;
    check_positive("b", bbox.b)?;
    check_positive("focal", focal)?;
    let bs = bbox.b * weak.s;
    Ok(RootTranslation {
        t: Vec3::new(
            weak.tx + 2.0 * bbox.cx / bs,
            weak.ty + 2.0 * bbox.cy / bs,
            2.0 * focal / bs,
        ),
        frame: Frame::FullCamera,
    })
}

/// Depth through the crop camera: `tZ_crop · (f / f_HMR) · (r / b)`.
pub fn full_depth_via_crop(weak: &WeakPerspective, bbox: &BBox, focal: f64) -> Result<f64> {
    let crop = weak_to_persp_crop(weak)?;
    check_positive("b", bbox.b)?;
    Ok(crop.t.z * (focal / F_HMR) * (CROP_RESOLUTION / bbox.b))
}

/// Inverse of [`crop_to_full_translation`].
pub fn full_to_weak(t_full: &Vec3, bbox: &BBox, focal: f64) -> Result<WeakPerspective> {
    check_positive("tZ", t_full.z)?;
    check_positive("b", bbox.b)?;
    check_positive("focal", focal)?;
    let s = 2.0 * focal / (bbox.b * t_full.z);
    let bs = bbox.b * s;
    Ok(WeakPerspective {
        s,
        tx: t_full.x - 2.0 * bbox.cx / bs,
        ty: t_full.y - 2.0 * bbox.cy / bs,
    })
}

/// Projects a single point; `None` if it is not in front of the camera.
#[inline]
pub fn project_point(p: &Vec3, camera: &PerspectiveCamera) -> Option<Vec2> {
    if p.z > 0.0 {
        Some(Vec2::new(
            camera.focal * p.x / p.z + camera.principal.x,
            camera.focal * p.y / p.z + camera.principal.y,
        ))
    } else {
        None
    }
}

/// Perspective projection `x = f X/Z + px`, `y = f Y/Z + py`.
pub fn project(points: &[Vec3], camera: &PerspectiveCamera) -> Result<Vec<Vec2>> {
    points
        .iter()
        .enumerate()
        .map(|(index, p)| project_point(p, camera).ok_or(Error::BehindCamera { index, z: p.z }))
        .collect()
}

/// Full-image location of the root implied by the weak-perspective crop
/// projection: `(b s / 2) tx + cx`, `(b s / 2) ty + cy`.
pub fn weak_project_to_full(weak: &WeakPerspective, bbox: &BBox) -> Vec2 {
    let half = 0.5 * bbox.b * weak.s;
    Vec2::new(half * weak.tx + bbox.cx, half * weak.ty + bbox.cy)
}

/// Focal of the rotated crop camera in resized-crop pixels.
pub fn crop_focal(bbox: &BBox, focal: f64) -> f64 {
    focal * CROP_RESOLUTION / bbox.b
}

/// Full-camera points expressed in the rotated crop camera frame.
pub fn full_to_crop_frame(points: &[Vec3], bbox: &BBox, focal: f64) -> Vec<Vec3> {
    let rt = bbox_rotation(bbox, focal).transpose();
    points.iter().map(|p| rt * p).collect()
}

/// Renders full-camera points in the resized crop through the rotated crop camera.
pub fn project_to_crop(points: &[Vec3], bbox: &BBox, focal: f64) -> Result<Vec<Vec2>> {
    let cam = PerspectiveCamera {
        focal: crop_focal(bbox, focal),
        principal: Vec2::zeros(),
        width: CROP_RESOLUTION,
        height: CROP_RESOLUTION,
    };
    project(&full_to_crop_frame(points, bbox, focal), &cam)
}

/// Maps a full-image pixel to resized-crop pixels through the rotated crop camera.
pub fn full_pixel_to_crop(p: &Vec2, bbox: &BBox, focal: f64) -> Option<Vec2> {
    let ray = Vec3::new(p.x, p.y, focal);
    let local = bbox_rotation(bbox, focal).transpose() * ray;
    let fc = crop_focal(bbox, focal);
    (local.z > 0.0).then(|| Vec2::new(fc * local.x / local.z, fc * local.y / local.z))
}
