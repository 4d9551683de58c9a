//! Serialization, output directories with manifests, coordinate conventions,
//! plot emission and the command-line surface.

pub mod cli;
pub mod coords;
pub mod plot;
pub mod store;

pub use coords::{convert_coords, Convention};
pub use plot::{emit_plot, Series};
pub use store::{read_dataset, read_json, read_scene, scene_file_name, OutputDir, RunManifest};
