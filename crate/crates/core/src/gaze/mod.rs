//! Fixation records and the density maps built from them.

pub mod density;
pub mod fixation;
pub mod kmeans;
pub mod noise;
pub mod saliency;
pub mod softbin;
pub mod subsample;
pub mod viewing;

pub use density::{build_density_map, DensityMap};
pub use fixation::{read_fixations, write_fixations, Fixation, FixationRecord};
pub use kmeans::{kmeans, kmeans_centroids, BinCentroids};
pub use noise::{add_gaze_noise, ScreenGeometry};
pub use saliency::{decode_saliency_map, load_saliency_map};
pub use softbin::{soft_bin_maps, soft_bin_maps_2d};
pub use subsample::{subsample_fixations, SubsampleStrategy};
pub use viewing::{normalize_viewing_times, ObserverSessions, View};
