use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{SlotClock, SourceParams};

/// 2D kinematic state of the tracked source: position (m), velocity (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SourceState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

impl SourceState {
    pub fn new(px: f64, py: f64, vx: f64, vy: f64) -> Self {
        SourceState {
            position: [px, py],
            velocity: [vx, vy],
        }
    }

    pub fn speed(&self) -> f64 {
        (self.velocity[0].powi(2) + self.velocity[1].powi(2)).sqrt()
    }

    pub fn as_vec4(&self) -> [f64; 4] {
        [
            self.position[0],
            self.position[1],
            self.velocity[0],
            self.velocity[1],
        ]
    }

    /// Initial state: uniform position and velocity, velocity capped.
    pub fn sample_initial(params: &SourceParams, rng: &mut impl Rng) -> Self {
        let r = params.init_position_range;
        let s = params.init_speed_range.min(params.max_speed);
        let mut state = SourceState {
            position: [rng.gen_range(-r..=r), rng.gen_range(-r..=r)],
            velocity: [rng.gen_range(-s..=s), rng.gen_range(-s..=s)],
        };
        clamp_speed(&mut state, params.max_speed);
        state
    }
}

fn clamp_speed(state: &mut SourceState, max_speed: f64) {
    let speed = state.speed();
    if speed > max_speed {
        let scale = max_speed / speed;
        state.velocity[0] *= scale;
        state.velocity[1] *= scale;
    }
}

/// Advances the source by one slot: position integrates the old velocity,
/// then velocity integrates a fresh truncated-Gaussian acceleration and is
/// rescaled so speed never exceeds `max_speed`.
pub fn source_step(
    state: &SourceState,
    params: &SourceParams,
    clock: &SlotClock,
    rng: &mut impl Rng,
) -> SourceState {
    let dt = clock.seconds(1.0);
    let mut next = *state;
    next.position[0] += state.velocity[0] * dt;
    next.position[1] += state.velocity[1] * dt;
    for axis in 0..2 {
        let a = truncated_gaussian(params.acceleration_std, params.acceleration_bound, rng);
        next.velocity[axis] += a * dt;
    }
    clamp_speed(&mut next, params.max_speed);
    next
}

/// Zero-mean Gaussian rejection-sampled to |a| <= bound.
fn truncated_gaussian(std: f64, bound: f64, rng: &mut impl Rng) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    let normal = Normal::new(0.0, std).expect("std must be finite and positive");
    loop {
        let a = normal.sample(rng);
        if a.abs() <= bound {
            return a;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, STREAM_SOURCE};

    fn no_accel_params() -> SourceParams {
        SourceParams {
            acceleration_std: 0.0,
            ..SourceParams::default()
        }
    }

    #[test]
    fn zero_acceleration_moves_by_velocity_dt() {
        let state = SourceState::new(0.0, 0.0, 1.0, 0.0);
        let mut rng = stream(0, STREAM_SOURCE);
        let next = source_step(&state, &no_accel_params(), &SlotClock::default(), &mut rng);
        assert!((next.position[0] - 0.1).abs() < 1e-12);
        assert_eq!(next.position[1], 0.0);
        assert_eq!(next.velocity, [1.0, 0.0]);
    }

    #[test]
    fn speed_clamps_to_exactly_max() {
        // Start at max speed with a strong tailwind; the step must land on
        // max_speed exactly, not above it.
        let params = SourceParams {
            acceleration_std: 2.0,
            acceleration_bound: 3.0,
            ..SourceParams::default()
        };
        let state = SourceState::new(0.0, 0.0, 10.0, 0.0);
        let mut rng = stream(3, STREAM_SOURCE);
        for _ in 0..100 {
            let next = source_step(&state, &params, &SlotClock::default(), &mut rng);
            assert!(next.speed() <= params.max_speed + 1e-12);
        }
    }

    #[test]
    fn long_run_never_exceeds_max_speed() {
        let params = SourceParams::default();
        let clock = SlotClock::default();
        let mut rng = stream(7, STREAM_SOURCE);
        let mut state = SourceState::sample_initial(&params, &mut rng);
        let mut max_seen = 0.0f64;
        for _ in 0..1_000_000 {
            state = source_step(&state, &params, &clock, &mut rng);
            max_seen = max_seen.max(state.speed());
        }
        assert!(
            max_seen <= params.max_speed + 1e-9,
            "speed reached {max_seen}"
        );
    }
}
