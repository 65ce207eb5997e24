//! Sigmoid MLP classifier with exact gradients w.r.t. parameters and inputs.

pub mod io;
mod mlp;
mod train;

pub use mlp::{
    backward, forward, init_model, loss, Gradients, Layer, MlpConfig, MlpModel, LOSS_PROB_FLOOR,
};
pub use train::{frame_error_rate, predict, train_sgd, StopReason, TrainConfig, TrainReport};
