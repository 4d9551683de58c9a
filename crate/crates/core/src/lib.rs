//! Full-frame-aware camera algebra, a simplified parametric body, reprojection
//! losses, per-sample fitting, pseudo-ground-truth annotation and the usual
//! 3D pose metrics, all runnable on synthetic scenes.
//!
//! Coordinates follow the camera convention: X right, Y down, Z forward.
//! 2D points are in pixels relative to the image center unless a function
//! says otherwise; conversion to top-left pixel coordinates lives in
//! [`io::coords`].

pub mod body_model;
pub mod camera;
pub mod error;
pub mod estimator;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod smoothing;
pub mod synthetic;

pub use error::{Error, Result};

/// 3-vector type used throughout.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 2-vector type used throughout.
pub type Vec2 = nalgebra::Vector2<f64>;
/// 3×3 matrix type used throughout.
pub type Mat3 = nalgebra::Matrix3<f64>;
