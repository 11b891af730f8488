//! Minimal differentiable-computation layer.
//!
//! Everything the training stack needs and nothing more: dense layers, an
//! LSTM cell, softmax, a tape that records vector-valued forward passes and
//! replays them in reverse for exact gradients, Adam updates, and a flat
//! binary checkpoint container. All math is `f64`; all execution is
//! single-threaded per network instance.

mod error;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod mat;
pub mod params;
pub mod tape;

pub use error::NnError;
pub use layers::{Activation, Dense, LstmCell};
pub use mat::Mat;
pub use params::{AdamConfig, Gradients, ParamId, ParameterSet};
pub use tape::{Tape, Var};
