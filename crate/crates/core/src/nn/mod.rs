//! The neural engine: layers, loss, and optimizer with exact hand-derived
//! gradients for the fixed 64 -> 32 -> 16 -> 1 stack.

pub mod adam;
pub mod batchnorm;
pub mod dense;
pub mod dropout;
pub mod loss;
pub mod lstm;
pub mod model;

pub use adam::{adam_step, adam_update_tensor, AdamState};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormParams};
pub use dense::{dense_backward, dense_forward, DenseParams};
pub use dropout::{dropout_backward, dropout_forward};
pub use loss::{weighted_bce, weighted_bce_grad, ClassWeights};
pub use lstm::{lstm_backward, lstm_forward, LstmParams};
pub use model::{
    init_params, model_backward, model_forward, ForwardCache, ModelGrads, ModelParams,
};
