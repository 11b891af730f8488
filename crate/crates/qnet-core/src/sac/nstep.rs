use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use super::buffer::ReplayBuffer;
use super::obs::ObsAssembly;
use crate::sim::{Action, SlotStep, TransitionSink};

/// An n-step replay record. `discount_to_bootstrap` is always gamma^n_used;
/// on terminal transitions the bootstrap term is dropped by the target
/// computation, not by zeroing the discount.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Action,
    pub n_step_return: f64,
    pub obs_after_n: Vec<f64>,
    pub n_used: u32,
    pub discount_to_bootstrap: f64,
    pub terminal: bool,
}

/// Discounted fold of up to n rewards plus a bootstrap:
/// sum_k gamma^k r_k + gamma^len * bootstrap.
pub fn nstep_fold(rewards: &[f64], bootstrap: f64, gamma: f64) -> f64 {
    assert!(!rewards.is_empty(), "nstep_fold needs at least one reward");
    let mut acc = 0.0;
    let mut g = 1.0;
    for r in rewards {
        acc += g * r;
        g *= gamma;
    }
    acc + g * bootstrap
}

pub type SharedBuffer = Arc<Mutex<ReplayBuffer>>;

/// Reward map r -> max((r + offset) * gain, floor) applied before folding.
/// The affine part preserves the ordering of policies in a discounted MDP;
/// the gain conditions the optimization when raw rewards differ in the
/// fourth decimal. The floor saturates runaway-staleness slots, which are
/// all equally hopeless, so their magnitude cannot drown the value
/// structure of the states that matter.
#[derive(Debug, Clone, Copy)]
pub struct RewardTransform {
    pub offset: f64,
    pub gain: f64,
    pub floor: f64,
}

impl Default for RewardTransform {
    fn default() -> Self {
        RewardTransform {
            offset: 0.0,
            gain: 1.0,
            floor: f64::NEG_INFINITY,
        }
    }
}

impl RewardTransform {
    /// Zero-centers the reward at its ceiling and amplifies: r_s maps to 0,
    /// differences grow by `gain`, saturating at `floor`.
    pub fn centered(gain: f64, floor: f64) -> Self {
        RewardTransform {
            offset: -super::reward::REWARD_SCALE,
            gain,
            floor,
        }
    }

    pub fn apply(&self, r: f64) -> f64 {
        ((r + self.offset) * self.gain).max(self.floor)
    }
}

struct PendingEntry {
    feats: Vec<f64>,
    action: Action,
    acc_return: f64,
    gamma_pow: f64,
    count: u32,
}

struct AssemblerState {
    pending: VecDeque<PendingEntry>,
}

/// Builds n-step [`Transition`]s from per-slot steps and appends them to a
/// shared replay buffer. One assembler per running episode; transitions that
/// hit the episode end are truncated (n_used < n) and flagged terminal.
pub struct NStepAssembler {
    n: u32,
    gamma: f64,
    assembly: ObsAssembly,
    transform: RewardTransform,
    state: Mutex<AssemblerState>,
    buffer: SharedBuffer,
}

impl NStepAssembler {
    pub fn new(n: usize, gamma: f64, assembly: ObsAssembly, buffer: SharedBuffer) -> Self {
        Self::with_transform(n, gamma, assembly, RewardTransform::default(), buffer)
    }

    pub fn with_transform(
        n: usize,
        gamma: f64,
        assembly: ObsAssembly,
        transform: RewardTransform,
        buffer: SharedBuffer,
    ) -> Self {
        assert!(n >= 1);
        NStepAssembler {
            n: n as u32,
            gamma,
            assembly,
            transform,
            state: Mutex::new(AssemblerState {
                pending: VecDeque::new(),
            }),
            buffer,
        }
    }
}

impl TransitionSink for NStepAssembler {
    fn push(&self, step: SlotStep) {
        let feats = self
            .assembly
            .features(&step.obs, step.backlog, step.interarrival_slots);
        let mut st = self.state.lock().unwrap();

        // Entries that already folded n rewards bootstrap at the current
        // observation.
        while st
            .pending
            .front()
            .map(|e| e.count >= self.n)
            .unwrap_or(false)
        {
            let e = st.pending.pop_front().unwrap();
            self.buffer.lock().unwrap().push(Transition {
                obs: e.feats,
                action: e.action,
                n_step_return: e.acc_return,
                obs_after_n: feats.clone(),
                n_used: e.count,
                discount_to_bootstrap: e.gamma_pow,
                terminal: false,
            });
        }

        st.pending.push_back(PendingEntry {
            feats,
            action: step.action,
            acc_return: 0.0,
            gamma_pow: 1.0,
            count: 0,
        });
        let reward = self.transform.apply(step.reward);
        for e in st.pending.iter_mut() {
            e.acc_return += e.gamma_pow * reward;
            e.gamma_pow *= self.gamma;
            e.count += 1;
        }
    }

    fn end_episode(&self) {
        let mut st = self.state.lock().unwrap();
        let mut buf = self.buffer.lock().unwrap();
        while let Some(e) = st.pending.pop_front() {
            buf.push(Transition {
                obs: e.feats.clone(),
                action: e.action,
                n_step_return: e.acc_return,
                obs_after_n: e.feats,
                n_used: e.count,
                discount_to_bootstrap: e.gamma_pow,
                terminal: true,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sac::AgentObservation;

    #[test]
    fn fold_examples() {
        assert!((nstep_fold(&[1.0, 1.0, 1.0], 0.0, 0.5) - 1.75).abs() < 1e-15);
        let (r, b, g) = (0.3, 2.0, 0.9);
        assert!((nstep_fold(&[r], b, g) - (r + g * b)).abs() < 1e-15);
    }

    #[test]
    fn fold_matches_bruteforce_oracle() {
        let mut rng = crate::rng::stream(77, 7);
        use rand::Rng;
        for _ in 0..200 {
            let len = rng.gen_range(1..=60);
            let rewards: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let bootstrap: f64 = rng.gen_range(-5.0..5.0);
            let gamma: f64 = rng.gen_range(0.01..0.999);
            // Brute force: literal powers.
            let mut want = 0.0;
            for (k, r) in rewards.iter().enumerate() {
                want += gamma.powi(k as i32) * r;
            }
            want += gamma.powi(len as i32) * bootstrap;
            let got = nstep_fold(&rewards, bootstrap, gamma);
            assert!((got - want).abs() < 1e-12, "got {got} want {want}");
        }
    }

    #[test]
    #[should_panic(expected = "at least one reward")]
    fn fold_rejects_empty() {
        nstep_fold(&[], 0.0, 0.9);
    }

    fn step(v: f64, action: Action, reward: f64) -> SlotStep {
        SlotStep {
            obs: AgentObservation {
                estimate: [v, 0.0, 0.0, 0.0],
                age_slots: 0,
            },
            action,
            reward,
            backlog: 0,
            interarrival_slots: 0,
        }
    }

    #[test]
    fn assembler_emits_correct_nstep_records() {
        let buffer: SharedBuffer = Arc::new(Mutex::new(ReplayBuffer::new(100)));
        let gamma = 0.5;
        let asm = NStepAssembler::new(2, gamma, ObsAssembly::EstimateOnly, buffer.clone());
        // Rewards 1, 2, 3 on three slots, then episode end.
        asm.push(step(0.0, Action::Query, 1.0));
        asm.push(step(1.0, Action::DontQuery, 2.0));
        asm.push(step(2.0, Action::Query, 3.0));
        asm.end_episode();

        let buf = buffer.lock().unwrap();
        assert_eq!(buf.len(), 3);
        let t0 = buf.get(0);
        // First transition: rewards [1, 2], bootstrap at obs of slot 2.
        assert_eq!(t0.n_used, 2);
        assert!(!t0.terminal);
        assert!((t0.n_step_return - (1.0 + 0.5 * 2.0)).abs() < 1e-15);
        assert_eq!(t0.discount_to_bootstrap, 0.25);
        // Remaining two truncate at the episode end.
        let t1 = buf.get(1);
        assert!(t1.terminal);
        assert_eq!(t1.n_used, 2);
        assert!((t1.n_step_return - (2.0 + 0.5 * 3.0)).abs() < 1e-15);
        let t2 = buf.get(2);
        assert!(t2.terminal);
        assert_eq!(t2.n_used, 1);
        assert_eq!(t2.n_step_return, 3.0);
        assert_eq!(t2.discount_to_bootstrap, 0.5);
    }

    #[test]
    fn discount_always_equals_gamma_to_n_used() {
        let buffer: SharedBuffer = Arc::new(Mutex::new(ReplayBuffer::new(10_000)));
        let gamma = 0.97;
        let asm = NStepAssembler::new(7, gamma, ObsAssembly::EstimateOnly, buffer.clone());
        let mut rng = crate::rng::stream(5, 3);
        use rand::Rng;
        for i in 0..500 {
            asm.push(step(i as f64, Action::Query, rng.gen_range(0.0..5.0)));
            if rng.gen::<f64>() < 0.02 {
                asm.end_episode();
            }
        }
        asm.end_episode();
        let buf = buffer.lock().unwrap();
        for i in 0..buf.len() {
            let t = buf.get(i);
            assert!(t.n_used <= 7);
            let want = (0..t.n_used).fold(1.0, |acc, _| acc * gamma);
            assert_eq!(t.discount_to_bootstrap, want, "exact power of gamma");
            if !t.terminal {
                assert_eq!(t.n_used, 7);
            }
        }
    }
}
