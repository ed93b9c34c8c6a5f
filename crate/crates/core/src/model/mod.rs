//! The slice-sequence classifier: a dense-block convolutional encoder run on
//! every slice with shared weights, a GRU over the slice sequence and a
//! shared six-label head per slice.

pub mod build;
pub mod config;
pub mod fixture;
pub mod forward;
pub mod prune;
pub mod train;

pub use build::{build_model, parameter_shapes};
pub use config::ModelConfig;
pub use fixture::gradcheck_fixture;
pub use forward::{
    classify, encoder_forward, forward_volume, gru_forward, time_distributed_forward, Classification,
};
pub use prune::{prune_by_magnitude, Pruned};
pub use train::{evaluate_scores, loss_and_gradient, predict, train_step};
