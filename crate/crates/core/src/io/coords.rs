//! Center-relative and top-left pixel conventions.

use serde::{Deserialize, Serialize};

use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convention {
    /// Origin at the image center, as used by every geometric routine.
    CenterRelative,
    /// Origin at the top-left pixel corner.
    TopLeft,
}

/// Converts pixel coordinates between conventions for a `width × height` image.
pub fn convert_coords(points: &[Vec2], from: Convention, to: Convention, width: f64, height: f64) -> Vec<Vec2> {
    let half = Vec2::new(width / 2.0, height / 2.0);
    match (from, to) {
        (Convention::CenterRelative, Convention::TopLeft) => points.iter().map(|p| p + half).collect(),
        (Convention::TopLeft, Convention::CenterRelative) => points.iter().map(|p| p - half).collect(),
        _ => points.to_vec(),
    }
}
