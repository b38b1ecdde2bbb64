//! Cyclic CNNs with pooling: parameters, forward pass, Jacobians, training.

mod engine;
mod forward;
mod jacobian;
mod ntk;
mod params;
mod train;

pub use forward::{evaluate, evaluate_batch, forward, ForwardTrace};
pub use jacobian::{
    constant_input_jacobian_blocks, constant_input_jacobian_factored, constant_input_jacobian_svd,
    downsample_matrix, input_jacobian, layer_jacobians, pooling_matrix, pre_activation_jacobians,
    InputJacobian,
};
pub use ntk::ntk_trace;
pub use params::{balancedness_residuals, NetworkParams};
pub use train::{
    loss_and_gradients, objective, train, History, HistoryRecord, LossKind, LossValue, Optimizer,
    Targets, TrainConfig, DIVERGENCE_LIMIT,
};
