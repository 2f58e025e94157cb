//! Point-set classifier trained with hand-written backpropagation.

pub mod checkpoint;
mod model;
mod train;

pub use model::{Architecture, Dense, Forward, Gradients, PointSetModel, PredictionVector};
pub(crate) use model::argmax;
pub use train::{accuracy, cosine_lr, train, Optimizer, StepStats, TrainConfig, TrainLog, Trainer};
pub(crate) use train::check_labels;
