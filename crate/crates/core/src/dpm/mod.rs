//! Deformable part models: filters, distance transforms, scoring and detection.

pub mod dt;
pub mod filter;
pub mod model;
pub mod nms;
pub mod persist;
pub mod score;
pub mod viz;

pub use dt::{distance_transform, Deformation, DistanceTransform, DEFORMATION_FLOOR};
pub use filter::{filter_response, Filter, Grid};
pub use model::{Component, Model, ModelMetadata, Part, MODEL_VERSION};
pub use nms::{detection_order, nms, Detection, DEFAULT_NMS_OVERLAP};
pub use persist::{load_model, model_from_json, model_to_json, save_model};
pub use score::{
    detect, detect_in_pyramid, detection_at, model_pyramid, placement_features, placement_runs, scan, score_component,
    score_pyramid, ComponentScore, PaddedLevel, PaddedPyramid,
};
pub use viz::visualize_model;
