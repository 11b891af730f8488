use serde::{Deserialize, Serialize};

use qnet_nn::{Activation, Dense, LstmCell, ParameterSet, Tape, Var};

use crate::rng;
use crate::sim::{Measurement, SlotClock, StateEstimator};

/// Feature scaling. Ages reach hundreds of slots and positions are
/// translation-heavy, so the recurrent stack only ever sees deltas and
/// rescaled values; the raw measurement bypasses it straight into the
/// linear head.
const DELTA_SCALE: f64 = 10.0;
const VEL_SCALE: f64 = 10.0;
const AGE_SCALE: f64 = 100.0;
/// Inputs saturate beyond these guards; accuracy at such ages is lost
/// regardless (the reward has long since bottomed out).
const AGE_INPUT_CAP: f64 = 1000.0;
const EXTRAP_SECONDS_CAP: f64 = 20.0;

/// Width of the side channel into the head: raw measurement (4) plus the
/// velocity-times-age extrapolation pair (2).
const SKIP_DIM: usize = 6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub lstm_width: usize,
    pub fc_width: usize,
    pub lr: f64,
    pub bptt_window: usize,
    #[serde(default)]
    pub clock: SlotClock,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            lstm_width: 64,
            fc_width: 64,
            lr: 1e-4,
            bptt_window: 64,
            clock: SlotClock::default(),
        }
    }
}

const LSTM_IN_DIM: usize = 7;

/// Recurrent state estimator with persistent per-episode hidden state.
pub struct EstimatorModel {
    pub cfg: EstimatorConfig,
    pub(crate) params: ParameterSet,
    pub(crate) lstm: LstmCell,
    pub(crate) fc1: Dense,
    pub(crate) fc2: Dense,
    pub(crate) head: Dense,
    h: Vec<f64>,
    c: Vec<f64>,
    prev_estimate: Option<[f64; 4]>,
}

impl EstimatorModel {
    /// Pipeline initialization: random recurrent stack, head primed at the
    /// identity-plus-extrapolation solution.
    pub fn new(cfg: EstimatorConfig, seed: u64) -> Self {
        let mut model = Self::new_random(cfg, seed);
        model.init_head_identity();
        model
    }

    /// Fully random initialization (an untrained network, no analytic
    /// prior). Baseline for measuring what pre-training learns.
    pub fn new_random(cfg: EstimatorConfig, seed: u64) -> Self {
        let mut init_rng = rng::stream(seed, rng::STREAM_INIT);
        let mut params = ParameterSet::new();
        let lstm = LstmCell::new(&mut params, "est.lstm", LSTM_IN_DIM, cfg.lstm_width, &mut init_rng);
        let fc1 = Dense::new(
            &mut params,
            "est.fc1",
            cfg.lstm_width,
            cfg.fc_width,
            Activation::Relu,
            &mut init_rng,
        );
        let fc2 = Dense::new(
            &mut params,
            "est.fc2",
            cfg.fc_width,
            cfg.fc_width,
            Activation::Relu,
            &mut init_rng,
        );
        let head = Dense::new(
            &mut params,
            "est.head",
            cfg.fc_width + SKIP_DIM,
            4,
            Activation::Identity,
            &mut init_rng,
        );
        EstimatorModel {
            h: vec![0.0; cfg.lstm_width],
            c: vec![0.0; cfg.lstm_width],
            prev_estimate: None,
            cfg,
            params,
            lstm,
            fc1,
            fc2,
            head,
        }
    }

    /// Head initialization: copy the measurement through, add velocity times
    /// age to the position outputs. The learned columns keep their random
    /// init and refine this prior.
    fn init_head_identity(&mut self) {
        let fc = self.cfg.fc_width;
        let w = self.params.get_mut(self.head.w);
        for out in 0..4 {
            for c in 0..SKIP_DIM {
                *w.at_mut(out, fc + c) = 0.0;
            }
            *w.at_mut(out, fc + out) = 1.0;
        }
        *w.at_mut(0, fc + 4) = 1.0;
        *w.at_mut(1, fc + 5) = 1.0;
    }

    /// Zeroes the output head entirely (test hook: a zero head must produce
    /// the zero estimate).
    pub fn zero_output_head(&mut self) {
        self.params.get_mut(self.head.w).fill(0.0);
        self.params.get_mut(self.head.b).fill(0.0);
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn hidden_state(&self) -> (&[f64], &[f64]) {
        (&self.h, &self.c)
    }

    pub fn prev_estimate(&self) -> Option<[f64; 4]> {
        self.prev_estimate
    }

    /// One estimator step on an existing tape. `prev_est` must be a 4-dim
    /// var; measurement and age enter as constants. Returns (estimate, h, c).
    pub(crate) fn step_on_tape(
        &self,
        params: &ParameterSet,
        tape: &mut Tape,
        prev_est: Var,
        meas: &Measurement,
        age_slots: u64,
        h: Var,
        c: Var,
    ) -> (Var, Var, Var) {
        let meas_vec = meas.state.as_vec4();
        let meas_in = tape.input(&meas_vec);
        let diff = tape.sub(prev_est, meas_in);
        let diff_s = tape.scale(diff, 1.0 / DELTA_SCALE);
        let vel = tape.slice(meas_in, 2, 2);
        let vel_s = tape.scale(vel, 1.0 / VEL_SCALE);
        let age_in = tape.input(&[(age_slots as f64).min(AGE_INPUT_CAP) / AGE_SCALE]);
        let x = tape.concat(&[diff_s, vel_s, age_in]);

        let (h2, c2) = self.lstm.step(params, tape, x, h, c);
        let f1 = self.fc1.forward(params, tape, h2);
        let f2 = self.fc2.forward(params, tape, f1);

        let age_sec = self
            .cfg
            .clock
            .seconds(age_slots as f64)
            .min(EXTRAP_SECONDS_CAP);
        let extrap = tape.input(&[meas_vec[2] * age_sec, meas_vec[3] * age_sec]);
        let head_in = tape.concat(&[f2, meas_in, extrap]);
        let est = self.head.forward(params, tape, head_in);
        (est, h2, c2)
    }

    pub fn reset_episode(&mut self) {
        self.h.iter_mut().for_each(|v| *v = 0.0);
        self.c.iter_mut().for_each(|v| *v = 0.0);
        self.prev_estimate = None;
    }

    /// Rollout estimate: advances the episode-scoped recurrent state by one
    /// step and feeds back its own previous output.
    pub fn estimate(&mut self, age_slots: u64, latest: &Measurement) -> [f64; 4] {
        let prev = self
            .prev_estimate
            .unwrap_or_else(|| latest.state.as_vec4());
        let mut tape = Tape::new();
        let prev_v = tape.input(&prev);
        let h_v = tape.input(&self.h);
        let c_v = tape.input(&self.c);
        let (est, h2, c2) = self.step_on_tape(&self.params, &mut tape, prev_v, latest, age_slots, h_v, c_v);
        self.h.copy_from_slice(tape.value(h2));
        self.c.copy_from_slice(tape.value(c2));
        let out = tape.value(est);
        let estimate = [out[0], out[1], out[2], out[3]];
        self.prev_estimate = Some(estimate);
        estimate
    }

    /// Clones configuration and weights, with fresh episode state.
    pub fn fork(&self) -> EstimatorModel {
        EstimatorModel {
            cfg: self.cfg.clone(),
            params: self.params.clone(),
            lstm: self.lstm.clone(),
            fc1: self.fc1.clone(),
            fc2: self.fc2.clone(),
            head: self.head.clone(),
            h: vec![0.0; self.cfg.lstm_width],
            c: vec![0.0; self.cfg.lstm_width],
            prev_estimate: None,
        }
    }

    /// Replaces weights with those of `other` (same architecture).
    pub fn adopt_params(&mut self, other: &EstimatorModel) {
        self.params = other.params.clone();
    }
}

impl StateEstimator for EstimatorModel {
    fn reset(&mut self) {
        self.reset_episode();
    }

    fn estimate(&mut self, age_slots: u64, latest: &Measurement) -> [f64; 4] {
        EstimatorModel::estimate(self, age_slots, latest)
    }
}

/// Predicts the latest measurement unchanged. Test oracle and baseline.
#[derive(Debug, Default, Clone, Copy)]
pub struct ZeroOrderHold;

impl ZeroOrderHold {
    pub fn new() -> Self {
        ZeroOrderHold
    }
}

impl StateEstimator for ZeroOrderHold {
    fn reset(&mut self) {}

    fn estimate(&mut self, _age_slots: u64, latest: &Measurement) -> [f64; 4] {
        latest.state.as_vec4()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SourceState;

    fn meas(px: f64, py: f64, vx: f64, vy: f64, t: u64) -> Measurement {
        Measurement {
            state: SourceState::new(px, py, vx, vy),
            generated_at: t,
        }
    }

    #[test]
    fn zero_head_produces_zero_estimate() {
        let mut m = EstimatorModel::new(EstimatorConfig::default(), 1);
        m.zero_output_head();
        m.reset_episode();
        let est = m.estimate(3, &meas(5.0, -2.0, 1.0, 0.5, 0));
        assert_eq!(est, [0.0; 4]);
    }

    #[test]
    fn default_head_extrapolates_measurement() {
        // Silence the learned columns; the identity + extrapolation skip
        // remains: position + velocity * age_seconds, velocity unchanged.
        let mut m = EstimatorModel::new(EstimatorConfig::default(), 2);
        let fc = m.cfg.fc_width;
        let w = m.params.get_mut(m.head.w);
        for out in 0..4 {
            for c in 0..fc {
                *w.at_mut(out, c) = 0.0;
            }
        }
        m.reset_episode();
        let est = m.estimate(20, &meas(1.0, 2.0, 3.0, -1.0, 0));
        // age 20 slots = 2 seconds.
        assert!((est[0] - (1.0 + 3.0 * 2.0)).abs() < 1e-12);
        assert!((est[1] - (2.0 - 1.0 * 2.0)).abs() < 1e-12);
        assert!((est[2] - 3.0).abs() < 1e-12);
        assert!((est[3] - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn same_inputs_same_outputs() {
        let run = || {
            let mut m = EstimatorModel::new(EstimatorConfig::default(), 3);
            m.reset_episode();
            let mut out = Vec::new();
            for t in 0..20u64 {
                out.push(m.estimate(t % 5, &meas(t as f64, 0.0, 1.0, 0.0, t)));
            }
            out
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fork_shares_weights_but_not_state() {
        let mut a = EstimatorModel::new(EstimatorConfig::default(), 4);
        a.reset_episode();
        a.estimate(1, &meas(1.0, 1.0, 0.0, 0.0, 0));
        let mut b = a.fork();
        assert_eq!(b.prev_estimate(), None);
        assert_eq!(
            a.params().byte_image(),
            b.params().byte_image(),
            "forked weights identical"
        );
        b.reset_episode();
        a.reset_episode();
        let ea = StateEstimator::estimate(&mut a, 2, &meas(0.5, 0.0, 1.0, 0.0, 0));
        let eb = StateEstimator::estimate(&mut b, 2, &meas(0.5, 0.0, 1.0, 0.0, 0));
        assert_eq!(ea, eb);
    }
}
