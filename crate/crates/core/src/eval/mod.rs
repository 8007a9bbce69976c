//! VOC-style evaluation and the experiment harness.

pub mod ap;
pub mod detections;
pub mod experiment;

pub use ap::{
    average_precision, average_precision_11pt, evaluate_detections, match_detections, GroundTruthBox, MatchLabel,
    PrCurve, ScoredBox, DEFAULT_MATCH_IOU,
};
pub use detections::{read_detections, write_detections, DetectionRecord};
pub use experiment::{
    class_ap, class_samples, detect_all, load_images, run_experiment, write_outcome, ClassResult, ExperimentOutcome,
    ExperimentReport, ExperimentSpec, LoadedImage, Variant,
};
