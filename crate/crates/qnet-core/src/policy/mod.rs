//! Deployable querying policies behind one interface.
//!
//! Baselines (always, never, threshold, probabilistic sigmoid) are stateless
//! or RNG-only; the trained kinds wrap checkpointed models. The threshold
//! and sigmoid baselines consume the ground-truth estimation error, which
//! only exists because the source is simulated: they are evaluation
//! yardsticks, not deployable policies.

mod baselines;
mod qnet;
mod spec;

pub use baselines::{AlwaysQuery, NeverQuery, SigmoidPolicy, SigmoidVariant, ThresholdPolicy};
pub use qnet::{argmax_six, EnsembleAgent, SingleModelAgent};
pub use spec::{build_policy, BuiltPolicy, PolicySpec};

/// Outstanding-query backlog recursion: +1 on query, -1 (floored at zero) on
/// arrival, both in one slot cancel out.
pub fn backlog_update(b: u64, queried: bool, arrived: bool) -> u64 {
    let b = if queried { b + 1 } else { b };
    if arrived {
        b.saturating_sub(1)
    } else {
        b
    }
}

/// Newtype used by the lambda observation variant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BacklogCounter {
    pub b: u64,
}

impl BacklogCounter {
    pub fn update(&mut self, queried: bool, arrived: bool) {
        self.b = backlog_update(self.b, queried, arrived);
    }
}
