use rand::Rng;

use super::config::EpisodeConfig;
use super::facility::FacilityState;
use super::source::{source_step, SourceState};
use super::{AgeClock, Measurement};
use crate::policy::backlog_update;
use crate::rng;
use crate::sac::{reward, AgentObservation};
use crate::{Error, Result};

/// The binary per-slot decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    DontQuery,
    Query,
}

impl Action {
    pub fn index(self) -> usize {
        match self {
            Action::DontQuery => 0,
            Action::Query => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        match i {
            0 => Action::DontQuery,
            1 => Action::Query,
            _ => panic!("action index {i} out of range"),
        }
    }
}

/// Everything a policy may look at when acting.
///
/// `true_error_pos` is the ground-truth position error of the current
/// estimate; it exists only because the source is simulated and is consumed
/// by the evaluation-only threshold and probabilistic baselines.
#[derive(Debug, Clone)]
pub struct PolicyCtx<'a> {
    pub obs: &'a AgentObservation,
    pub latest: &'a Measurement,
    pub true_error_pos: f64,
    pub arrived: bool,
    pub backlog: u64,
    pub interarrival_slots: u64,
}

pub trait QueryPolicy {
    /// Restores initial per-episode state (recurrent states, counters, RNG).
    fn reset(&mut self, seed: u64);
    fn act(&mut self, ctx: &PolicyCtx) -> Action;
}

/// Produces the agent's state estimate each slot and advances any internal
/// recurrent state. Implementations must be deterministic functions of
/// (checkpoint, input sequence).
pub trait StateEstimator {
    fn reset(&mut self);
    fn estimate(&mut self, age_slots: u64, latest: &Measurement) -> [f64; 4];
}

/// Per-slot record emitted to the transition sink, one slot after the fact
/// (the reward for the action at slot t uses the estimate at t+1).
#[derive(Debug, Clone)]
pub struct SlotStep {
    pub obs: AgentObservation,
    pub action: Action,
    pub reward: f64,
    pub backlog: u64,
    pub interarrival_slots: u64,
}

/// Receives per-slot steps; must tolerate concurrent appends from episodes
/// running in parallel.
pub trait TransitionSink: Sync {
    fn push(&self, step: SlotStep);
    fn end_episode(&self);
}

/// Sink that discards everything (evaluation runs).
pub struct NullSink;

impl TransitionSink for NullSink {
    fn push(&self, _step: SlotStep) {}
    fn end_episode(&self) {}
}

/// Full view of one slot, for training drivers that interleave work with
/// the rollout (estimator sequence recording, learner updates).
#[derive(Debug, Clone)]
pub struct SlotRecord {
    pub slot: u64,
    pub q: f64,
    pub truth: SourceState,
    pub latest: Measurement,
    pub age_slots: u64,
    pub estimate: [f64; 4],
    pub action: Action,
    pub true_error_pos: f64,
}

pub trait SlotHook {
    fn on_slot(&mut self, _rec: &SlotRecord) {}
}

impl SlotHook for () {}

/// Per-episode averages. Ages are in slots here; conversion to seconds is
/// the metrics layer's job.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub seed: u64,
    pub q: f64,
    pub slots: u64,
    pub avg_age_slots: f64,
    /// Mean ground-truth position error (meters) of the estimate.
    pub avg_err: f64,
    /// Mean squared error over the full 4-dim state.
    pub avg_err_sq: f64,
    pub query_rate: f64,
    pub avg_reward: f64,
    pub final_age_slots: u64,
}

impl EpisodeStats {
    pub const CSV_HEADER: &'static str = "seed,q,avg_age_slots,avg_err,query_rate";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.seed, self.q, self.avg_age_slots, self.avg_err, self.query_rate
        )
    }
}

fn err_stats(estimate: &[f64; 4], truth: &SourceState) -> (f64, f64) {
    let t = truth.as_vec4();
    let mut sq = 0.0;
    for i in 0..4 {
        let d = estimate[i] - t[i];
        sq += d * d;
    }
    let dp0 = estimate[0] - t[0];
    let dp1 = estimate[1] - t[1];
    (sq, (dp0 * dp0 + dp1 * dp1).sqrt())
}

/// Runs one episode.
///
/// Slot order: advance source, estimate, act, enqueue on query, advance the
/// facility, tick the age clock. The reward for the action at slot t is
/// computed from the estimation error at slot t+1 and emitted then; one
/// trailing source/estimate step after the horizon settles the final reward.
///
/// `q_override` pins the service parameter for evaluation sweeps; otherwise
/// `q` is drawn uniformly from `cfg.q_range` and held for the episode.
pub fn run_episode(
    cfg: &EpisodeConfig,
    q_override: Option<f64>,
    estimator: &mut dyn StateEstimator,
    policy: &mut dyn QueryPolicy,
    sink: &dyn TransitionSink,
    hook: &mut dyn SlotHook,
) -> Result<EpisodeStats> {
    cfg.validate()?;
    let q = match q_override {
        Some(q) => {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::Config(format!("q override {q} outside (0,1]")));
            }
            q
        }
        None => rng::stream(cfg.seed, rng::STREAM_Q_DRAW).gen_range(cfg.q_range.0..cfg.q_range.1),
    };

    let mut source_rng = rng::stream(cfg.seed, rng::STREAM_SOURCE);
    let mut init_rng = rng::stream(cfg.seed, rng::STREAM_INIT);
    let mut state = SourceState::sample_initial(&cfg.source, &mut init_rng);
    let mut facility = FacilityState::new(q, cfg.seed);
    let mut age = AgeClock::new();

    estimator.reset();
    policy.reset(rng::mix2(cfg.seed, rng::STREAM_POLICY));

    // Slot 0 truth, plus the synthetic initial measurement that pins the
    // age clock and the estimator input at episode start.
    state = source_step(&state, &cfg.source, &cfg.clock, &mut source_rng);
    let mut latest = Measurement {
        state,
        generated_at: 0,
    };
    age.tick(Some(&latest), 0);

    let mut backlog: u64 = 0;
    let mut interarrival: u64 = 0;
    let mut arrived_last = true;

    let mut pending: Option<(AgentObservation, Action, u64, u64)> = None;

    let mut acc_age = 0.0;
    let mut acc_err = 0.0;
    let mut acc_err_sq = 0.0;
    let mut acc_queries = 0u64;
    let mut acc_reward = 0.0;
    let mut counted = 0u64;

    let horizon = cfg.episode_length;
    for slot in 0..horizon {
        if slot > 0 {
            state = source_step(&state, &cfg.source, &cfg.clock, &mut source_rng);
        }
        let age_now = age.age();
        let estimate = estimator.estimate(age_now, &latest);
        if estimate.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "estimator produced non-finite estimate at slot {slot}"
            )));
        }
        let (err_sq, err_pos) = err_stats(&estimate, &state);

        if let Some((obs, action, bl, ia)) = pending.take() {
            let r = reward(err_sq);
            acc_reward += r;
            sink.push(SlotStep {
                obs,
                action,
                reward: r,
                backlog: bl,
                interarrival_slots: ia,
            });
        }

        let latest_used = latest;
        let obs = AgentObservation {
            estimate,
            age_slots: age_now,
        };
        let ctx = PolicyCtx {
            obs: &obs,
            latest: &latest,
            true_error_pos: err_pos,
            arrived: arrived_last,
            backlog,
            interarrival_slots: interarrival,
        };
        let action = policy.act(&ctx);
        pending = Some((obs.clone(), action, backlog, interarrival));

        if action == Action::Query {
            acc_queries += u64::from(slot >= cfg.warmup_slots);
            facility.enqueue(Measurement {
                state,
                generated_at: slot,
            });
        }

        let delivered = facility.step();
        let arrived_any = delivered.is_some();
        backlog = backlog_update(backlog, action == Action::Query, arrived_any);
        let was_fresh = age.tick(delivered.as_ref(), slot + 1);
        if was_fresh {
            latest = delivered.unwrap();
        }

        // The record carries the slot's own view: the measurement the
        // estimator consumed, not the one a delivery just installed.
        hook.on_slot(&SlotRecord {
            slot,
            q,
            truth: state,
            latest: latest_used,
            age_slots: age_now,
            estimate,
            action,
            true_error_pos: err_pos,
        });

        if slot >= cfg.warmup_slots {
            counted += 1;
            acc_age += age_now as f64;
            acc_err += err_pos;
            acc_err_sq += err_sq;
        }

        interarrival = if arrived_any { 0 } else { interarrival + 1 };
        arrived_last = arrived_any;
    }

    // Trailing estimate at the horizon settles the final slot's reward.
    state = source_step(&state, &cfg.source, &cfg.clock, &mut source_rng);
    let final_age = age.age();
    let estimate = estimator.estimate(final_age, &latest);
    let (err_sq, _) = err_stats(&estimate, &state);
    if let Some((obs, action, bl, ia)) = pending.take() {
        let r = reward(err_sq);
        acc_reward += r;
        sink.push(SlotStep {
            obs,
            action,
            reward: r,
            backlog: bl,
            interarrival_slots: ia,
        });
    }
    sink.end_episode();

    let denom = counted.max(1) as f64;
    Ok(EpisodeStats {
        seed: cfg.seed,
        q,
        slots: horizon,
        avg_age_slots: acc_age / denom,
        avg_err: acc_err / denom,
        avg_err_sq: acc_err_sq / denom,
        query_rate: acc_queries as f64 / denom,
        avg_reward: acc_reward / horizon as f64,
        final_age_slots: final_age,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::ZeroOrderHold;
    use crate::policy::{AlwaysQuery, NeverQuery};

    fn tiny_cfg(seed: u64) -> EpisodeConfig {
        let mut cfg = EpisodeConfig::new((0.4, 0.6), 200, seed);
        cfg.warmup_slots = 10;
        cfg
    }

    #[test]
    fn never_query_has_zero_rate_and_unbounded_age() {
        let cfg = tiny_cfg(1);
        let stats = run_episode(
            &cfg,
            None,
            &mut ZeroOrderHold::new(),
            &mut NeverQuery,
            &NullSink,
            &mut (),
        )
        .unwrap();
        assert_eq!(stats.query_rate, 0.0);
        assert!(stats.final_age_slots >= cfg.episode_length);
    }

    #[test]
    fn always_query_q1_settles_at_age_one() {
        let cfg = tiny_cfg(2);
        let stats = run_episode(
            &cfg,
            Some(1.0),
            &mut ZeroOrderHold::new(),
            &mut AlwaysQuery,
            &NullSink,
            &mut (),
        )
        .unwrap();
        assert!((stats.avg_age_slots - 1.0).abs() < 1e-12);
        assert_eq!(stats.query_rate, 1.0);
    }

    #[test]
    fn same_config_same_seed_is_bit_identical() {
        let cfg = tiny_cfg(3);
        let run = || {
            run_episode(
                &cfg,
                None,
                &mut ZeroOrderHold::new(),
                &mut AlwaysQuery,
                &NullSink,
                &mut (),
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn q_override_outside_range_is_rejected() {
        let cfg = tiny_cfg(4);
        assert!(run_episode(
            &cfg,
            Some(0.0),
            &mut ZeroOrderHold::new(),
            &mut AlwaysQuery,
            &NullSink,
            &mut (),
        )
        .is_err());
    }
}
