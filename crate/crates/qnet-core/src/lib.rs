//! Learning when an agent should query an edge-cloud over a shared,
//! unknown network.
//!
//! The crate is organized around one pipeline:
//!
//! - [`sim`] — discrete-time simulation of the source process, the single
//!   queue + single server service facility (the network-plus-cloud model),
//!   and the agent-side age clock; generates training and evaluation
//!   episodes under domain randomization of the service parameter `q`.
//! - [`estimator`] — recurrent network mapping the stream of (previous
//!   estimate, age, latest measurement) to the current state estimate,
//!   including its supervised pre-training phase.
//! - [`sac`] — discrete-action soft actor-critic with automatic temperature
//!   tuning and n-step returns; owns reward computation, the replay buffer
//!   and the range-model training driver.
//! - [`policy`] — every deployable querying policy behind one interface:
//!   the three-model ensemble, the single-model variant, and the always /
//!   threshold / probabilistic baselines.
//! - [`trace`] — millisecond-granularity replay of recorded cellular
//!   delivery-opportunity schedules around a first-come-first-served cloud
//!   responder.
//! - [`metrics`] — age/error scatter rows, age-binned tables, CSV export.

pub mod estimator;
pub mod metrics;
pub mod policy;
pub mod rng;
pub mod sac;
pub mod sim;
pub mod trace;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trace error: {0}")]
    Trace(String),
    #[error("policy spec error: {0}")]
    PolicySpec(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error(transparent)]
    Nn(#[from] qnet_nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
