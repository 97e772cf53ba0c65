//! Conditional tabular GAN with a residual packed critic and an auxiliary
//! real-class-plus-synthetic classifier.

pub mod checkpoint;
mod config;
mod loss;
mod model;
mod nets;

pub use config::{GanConfig, GanMode, GAN_KEYS};
pub use loss::{cross_entropy_node, gradient_penalty, loss_c, loss_d, loss_g, loss_total, pack, pack_node};
pub use model::{fit, StepMetrics, Synthesizer, Trainer};
pub use nets::{classifier, classifier_columns, critic, generator, Networks, Params, CLASSIFIER, CRITIC, GENERATOR};
