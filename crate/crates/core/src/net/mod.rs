//! Forward and backward passes for the CNN + stacked-LSTM regressor.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod dropout;
mod linalg;
pub mod lstm;
pub mod network;
pub mod params;
pub mod pool;

pub use activation::{hard_sigmoid, relu};
pub use network::{
    activation_stats, apply_running_update, forward_batch, network_backward, network_forward,
    sample_masks, BatchOutput, ForwardTrace, Mode, Output,
};
pub use params::{HyperParams, Layout, NetworkParams, Readout, TensorInfo, OUTPUT_DIM};
