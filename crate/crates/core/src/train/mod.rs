//! Latent SVM training of deformable part models.

pub mod config;
pub mod init;
pub mod latent;
pub mod sgd;
mod trainer;

pub use config::{SgdConfig, TrainConfig};
pub use init::{init_components, init_parts, WarpSource};
pub use latent::{mine_negatives, relabel_positives, HardNegative, Mining, Placement, TrainImage, WindowExample};
pub use sgd::{optimize_convex, Example, ParamLayout, SolveOutcome, TrainingExample};
pub use trainer::{train, Phase, RoundTelemetry, TrainOutcome, TrainSample};
