use qnet_nn::{AdamConfig, Tape};

use super::model::EstimatorModel;
use crate::sim::{Measurement, SlotHook, SlotRecord};
use crate::Result;

const GRAD_CLIP_NORM: f64 = 10.0;

/// The achievable squared error grows like (age * typical speed)^2: a slot
/// that is 10 seconds stale carries hundreds of square meters of
/// irreducible error, a fresh slot fractions of one. Each step's squared
/// error is divided by this difficulty so stale slots don't drown the
/// trackable ones.
const DIFFICULTY_SPEED: f64 = 5.0;

pub(crate) fn age_difficulty_weight(age_seconds: f64) -> f64 {
    1.0 / (1.0 + (age_seconds * DIFFICULTY_SPEED).powi(2))
}

/// Recurrent and feedback state carried across truncated windows of one
/// episode. Carried values are computed under the parameters current when
/// the previous window ran (standard truncated-BPTT staleness).
#[derive(Debug, Clone)]
pub struct SequenceState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub prev_estimate: [f64; 4],
}

impl SequenceState {
    pub fn fresh(lstm_width: usize, first_measurement: &Measurement) -> Self {
        SequenceState {
            h: vec![0.0; lstm_width],
            c: vec![0.0; lstm_width],
            prev_estimate: first_measurement.state.as_vec4(),
        }
    }
}

/// One training window: per-slot ages and latest measurements as the network
/// saw them, with ground truth targets.
pub struct TrainSequence<'a> {
    pub ages: &'a [u64],
    pub measurements: &'a [Measurement],
    pub truths: &'a [[f64; 4]],
    pub init: SequenceState,
}

/// Raw per-slot stream of one episode, recorded during rollout.
#[derive(Debug, Clone, Default)]
pub struct EpisodeRecord {
    pub ages: Vec<u64>,
    pub measurements: Vec<Measurement>,
    pub truths: Vec<[f64; 4]>,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }

    pub fn window(&self, start: usize, len: usize, init: SequenceState) -> TrainSequence<'_> {
        let end = (start + len).min(self.len());
        TrainSequence {
            ages: &self.ages[start..end],
            measurements: &self.measurements[start..end],
            truths: &self.truths[start..end],
            init,
        }
    }
}

/// Slot hook that captures the estimator training stream of an episode.
#[derive(Debug, Default)]
pub struct EpisodeRecorder {
    pub record: EpisodeRecord,
}

impl SlotHook for EpisodeRecorder {
    fn on_slot(&mut self, rec: &SlotRecord) {
        self.record.ages.push(rec.age_slots);
        self.record.measurements.push(rec.latest);
        self.record.truths.push(rec.truth.as_vec4());
    }
}

impl EstimatorModel {
    /// One Adam update on the difficulty-weighted mean squared error over a
    /// batch of sequences, gradients through truncated
    /// backpropagation-through-time (closed loop: each step consumes the
    /// previous step's estimate node).
    ///
    /// Returns the loss and the final per-sequence states for carrying into
    /// the next window.
    pub fn train_step(&mut self, batch: &[TrainSequence]) -> Result<(f64, Vec<SequenceState>)> {
        assert!(!batch.is_empty(), "empty training batch");
        let mut tape = Tape::new();
        let mut per_step_errors = Vec::new();
        let mut finals = Vec::with_capacity(batch.len());

        for seq in batch {
            let steps = seq.ages.len();
            assert_eq!(seq.measurements.len(), steps);
            assert_eq!(seq.truths.len(), steps);
            assert!(steps > 0, "empty training sequence");

            let mut prev = tape.input(&seq.init.prev_estimate);
            let mut h = tape.input(&seq.init.h);
            let mut c = tape.input(&seq.init.c);
            for k in 0..steps {
                let (est, h2, c2) = self.step_on_tape(
                    &self.params,
                    &mut tape,
                    prev,
                    &seq.measurements[k],
                    seq.ages[k],
                    h,
                    c,
                );
                let truth = tape.input(&seq.truths[k]);
                let sq = tape.squared_error(est, truth);
                let w = age_difficulty_weight(self.cfg.clock.seconds(seq.ages[k] as f64));
                per_step_errors.push(tape.scale(sq, w));
                prev = est;
                h = h2;
                c = c2;
            }
            let est_v = tape.value(prev);
            finals.push(SequenceState {
                h: tape.value(h).to_vec(),
                c: tape.value(c).to_vec(),
                prev_estimate: [est_v[0], est_v[1], est_v[2], est_v[3]],
            });
        }

        let stacked = tape.concat(&per_step_errors);
        let mean_sq = tape.mean(stacked);
        let loss = tape.scale(mean_sq, 0.25); // per component
        let mut grads = self.params.zero_grads();
        tape.backward(&self.params, loss, &mut grads)?;
        grads.clip_global_norm(GRAD_CLIP_NORM);
        let lr = self.cfg.lr;
        self.params.adam_step(&grads, &AdamConfig::with_lr(lr))?;
        Ok((tape.scalar_value(loss), finals))
    }

    /// Runs windowed training over whole episode records: every episode is
    /// cut into `bptt_window` slices with state carried across slices.
    /// Returns the per-step losses.
    pub fn train_on_records(&mut self, records: &[&EpisodeRecord]) -> Result<Vec<f64>> {
        let window = self.cfg.bptt_window;
        let mut losses = Vec::new();
        let max_len = records.iter().map(|r| r.len()).max().unwrap_or(0);
        let mut states: Vec<SequenceState> = records
            .iter()
            .map(|r| SequenceState::fresh(self.cfg.lstm_width, &r.measurements[0]))
            .collect();
        let mut start = 0;
        while start < max_len {
            let mut batch = Vec::new();
            let mut idx = Vec::new();
            for (i, r) in records.iter().enumerate() {
                if start < r.len() {
                    batch.push(r.window(start, window, states[i].clone()));
                    idx.push(i);
                }
            }
            if batch.is_empty() {
                break;
            }
            let (loss, finals) = self.train_step(&batch)?;
            losses.push(loss);
            for (slot, st) in idx.into_iter().zip(finals.into_iter()) {
                states[slot] = st;
            }
            start += window;
        }
        Ok(losses)
    }
}
