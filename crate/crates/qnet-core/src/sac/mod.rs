//! Discrete-action soft actor-critic with automatic temperature tuning and
//! n-step returns.
//!
//! The learner is observation-agnostic: it trains on plain feature vectors,
//! which lets the critic-convergence and bandit tests drive it with toy
//! MDPs. The query-scheduling instantiation assembles features from the
//! agent observation (estimate, age) via [`ObsAssembly`].

mod buffer;
mod learner;
mod nstep;
mod obs;
mod reward;
pub mod train;

pub use buffer::ReplayBuffer;
pub use learner::{critic_targets, SacLearner, TargetBatchEntry, TemperatureState, UpdateStats};
pub use nstep::{nstep_fold, NStepAssembler, RewardTransform, SharedBuffer, Transition};
pub use obs::{AgentObservation, ObsAssembly};
pub use reward::{reward, REWARD_ERROR_CEILING, REWARD_SCALE};

use serde::{Deserialize, Serialize};

/// Which q-range a model is trained for. `One` is the single-model ablation
/// trained over the whole range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeId {
    Low,
    Mid,
    High,
    One,
}

impl RangeId {
    pub const ALL: [RangeId; 4] = [RangeId::Low, RangeId::Mid, RangeId::High, RangeId::One];

    pub fn as_str(&self) -> &'static str {
        match self {
            RangeId::Low => "low",
            RangeId::Mid => "mid",
            RangeId::High => "high",
            RangeId::One => "one",
        }
    }

    pub fn parse(s: &str) -> Option<RangeId> {
        match s {
            "low" => Some(RangeId::Low),
            "mid" => Some(RangeId::Mid),
            "high" => Some(RangeId::High),
            "one" => Some(RangeId::One),
            _ => None,
        }
    }
}

impl std::fmt::Display for RangeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-range hyperparameters. The n-step horizon and target entropy follow
/// the range: slow service needs a longer horizon for a policy change to
/// show up in delivery patterns, and a tighter entropy target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SacHyper {
    pub n: usize,
    pub target_entropy: f64,
    pub lr_actor_critic: f64,
    pub lr_estimator: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub tau_polyak: f64,
    pub q_range: (f64, f64),
}

impl SacHyper {
    pub fn for_range(range: RangeId) -> Self {
        let (q_range, n, target_entropy) = match range {
            RangeId::Low => ((0.05, 0.1), 60, 0.09),
            RangeId::Mid => ((0.1, 0.3), 20, 0.3),
            RangeId::High => ((0.3, 1.0), 10, 0.6),
            RangeId::One => ((0.05, 1.0), 50, 0.2),
        };
        SacHyper {
            n,
            target_entropy,
            lr_actor_critic: 1.5e-4,
            lr_estimator: 1e-4,
            gamma: 0.99,
            batch_size: 256,
            tau_polyak: 0.005,
            q_range,
        }
    }
}
