//! Evaluation over recorded cellular link schedules.
//!
//! A trace file is ASCII, one non-negative integer millisecond timestamp per
//! line, non-decreasing. Each line is a delivery opportunity: permission to
//! move 1500 bytes during that millisecond, with repeats multiplying the
//! capacity. Unused opportunities are forfeited, never banked. Two agents
//! talk to one first-come-first-served cloud responder over per-agent
//! uplink/downlink emulated links.

mod experiment;
mod link;
mod schedule;

pub use experiment::{
    classify_brtt, draw_assignment, run_trace_experiment, AgentSetup, AgentTraceStats, BrttClass,
    ExperimentStats, LinkAssignment, TraceCategory, TraceExperimentConfig,
};
pub use link::{EmulatedLink, MTU_BYTES};
pub use schedule::{parse_trace, parse_trace_text, TraceSchedule};
