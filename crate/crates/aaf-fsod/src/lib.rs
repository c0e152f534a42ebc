//! Desk-scale few-shot object detection harness: synthetic scenes, a tiny
//! convolutional backbone, an anchor-free detection head, episodic
//! training, and exact evaluation metrics.

pub mod backbone;
pub mod classes;
pub mod detect;
pub mod episode;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod head;
pub mod loss;
pub mod model;
pub mod scene;
pub mod train;

pub use classes::{ClassId, ClassSplit, ColorTag, ShapeKind};
pub use error::HarnessError;
pub use eval::EvalReport;
pub use geometry::{compute_iou, BoundingBox};
pub use model::DetectorSpec;
pub use train::{evaluate, overfit_single_episode, run_training, Schedule, TrainOutcome};
