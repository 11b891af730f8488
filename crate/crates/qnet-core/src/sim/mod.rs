//! Discrete-time simulation of source, service facility and age clock.
//!
//! Time advances in slots. At every slot the agent decides whether to query;
//! a query samples the source and enqueues the measurement as a packet into
//! the facility (one FIFO queue, one server). The in-service packet departs
//! in a slot with probability `q`, independently across slots, so service
//! times are geometric(q) and a packet spends at least one slot in service.
//! A departed packet reaches the agent at the next decision instant, where
//! the age clock either resets to the packet's age or increments by one.

mod age;
mod config;
mod curve;
mod episode;
mod facility;
mod source;

pub use age::AgeClock;
pub use config::{EpisodeConfig, SlotClock, SourceParams};
pub use curve::{bernoulli_arrival_age_curve, utilization_grid, AgeCurvePoint};
pub use episode::{
    run_episode, Action, EpisodeStats, NullSink, PolicyCtx, QueryPolicy, SlotHook, SlotRecord,
    SlotStep, StateEstimator, TransitionSink,
};
pub use facility::FacilityState;
pub use source::{source_step, SourceState};

/// A timestamped source-state sample traveling as a packet.
///
/// `generated_at` is the slot index at which the sample was taken and never
/// changes afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub state: SourceState,
    pub generated_at: u64,
}
