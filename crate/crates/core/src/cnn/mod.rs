//! One-dimensional convolutional classifier for I/Q frames.

mod eval;
mod gradcheck;
mod model;
mod real;
mod tensor;
mod train;

pub use eval::{evaluate, frames_to_batch, predict, predict_batch, probabilities_from_scores, Prediction};
pub use gradcheck::{gradient_check, GradCheckOptions, GradCheckReport, GroupError};
pub use model::{Architecture, BnStats, Head, ConvSpec, EpochRecord, Gradients, Mode, Model, Param};
pub use real::Real;
pub use tensor::Tensor;
pub use train::{loss_and_accuracy, train, train_step, train_with_progress, Sgdm, StepStats, TrainConfig, TrainOutcome};
