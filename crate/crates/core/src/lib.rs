//! Session-based purchase-intent prediction at desk scale.
//!
//! The crate covers the full path from raw clickstream CSVs to evaluated
//! models: event parsing and sessionization, feature schema fitting,
//! user-disjoint splits, an LSTM stack with hand-derived gradients, a
//! replay/exploration training loop, classification metrics with threshold
//! sweeps, and a synthetic generator with planted ground truth for
//! end-to-end verification.

pub mod baselines;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod persist;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Matrix;
