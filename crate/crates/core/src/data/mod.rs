//! Dataset manifests, gaze-channel recipes and the synthetic dataset generator.

pub mod manifest;
pub mod recipe;
pub mod synth;

pub use manifest::{Annotation, Dataset, DatasetManifest, ImageEntry, Split};
pub use recipe::{GazeMapper, GazeRecipe, GazeSource};
pub use synth::{generate_synthetic, render_image, SyntheticImage, SyntheticSpec};
