//! Prediction side: per-sample fitting, the keypoint lifter, the annotator
//! pipeline and the experiment drivers built on them.

pub mod annotate;
pub mod experiments;
pub mod fit;
pub mod lifter;
pub mod optim;

pub use fit::{fit_sample, fit_sample_from, FitConfig, FitReport, InitKind};
