//! Deformable part model detection with fixation density maps scored as
//! additional feature channels next to gradient features.

pub mod data;
pub mod dpm;
pub mod error;
pub mod eval;
pub mod features;
pub mod gaze;
pub mod geometry;
pub mod grid;
pub mod raster;
pub mod train;

pub use error::{Error, Result};
pub use geometry::BBox;
pub use raster::Raster;
