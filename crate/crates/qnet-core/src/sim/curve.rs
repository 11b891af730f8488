use rand::Rng;

use super::facility::FacilityState;
use super::{AgeClock, Measurement};
use crate::rng;
use crate::sim::SourceState;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeCurvePoint {
    pub arrival_probability: f64,
    pub utilization: f64,
    pub average_age_slots: f64,
}

/// Monte-Carlo average age versus utilization p/q for i.i.d. Bernoulli(p)
/// querying, the analysis behind the age U-curve: average age is large for
/// both very low utilization (rare updates) and very high utilization
/// (queueing delay).
pub fn bernoulli_arrival_age_curve(
    q: f64,
    p_grid: &[f64],
    slots: u64,
    seed: u64,
) -> Result<Vec<AgeCurvePoint>> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Config(format!("q must be in (0,1], got {q}")));
    }
    for &p in p_grid {
        if !(p > 0.0 && p <= q) {
            return Err(Error::Config(format!(
                "arrival probability {p} must satisfy 0 < p <= q = {q} (utilization <= 1)"
            )));
        }
    }
    let mut out = Vec::with_capacity(p_grid.len());
    for (idx, &p) in p_grid.iter().enumerate() {
        let mut arrival_rng = rng::stream3(seed, 101, idx as u64);
        let mut facility = FacilityState::new(q, rng::mix2(seed, idx as u64));
        let mut age = AgeClock::new();
        age.tick(
            Some(&Measurement {
                state: SourceState::default(),
                generated_at: 0,
            }),
            0,
        );
        let mut acc = 0.0;
        for slot in 0..slots {
            if arrival_rng.gen::<f64>() < p {
                facility.enqueue(Measurement {
                    state: SourceState::default(),
                    generated_at: slot,
                });
            }
            let delivered = facility.step();
            age.tick(delivered.as_ref(), slot + 1);
            acc += age.age() as f64;
        }
        out.push(AgeCurvePoint {
            arrival_probability: p,
            utilization: p / q,
            average_age_slots: acc / slots as f64,
        });
    }
    Ok(out)
}

/// The standard utilization grid 0.05, 0.10, ..., 0.95 mapped to arrival
/// probabilities for a given q.
pub fn utilization_grid(q: f64) -> Vec<f64> {
    (1..=19).map(|i| q * (i as f64) * 0.05).collect()
}
