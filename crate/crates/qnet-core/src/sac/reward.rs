/// Reward ceiling: squared estimation errors at or above this level earn
/// zero reward.
pub const REWARD_ERROR_CEILING: f64 = 8e4;

/// Reward at zero error.
pub const REWARD_SCALE: f64 = 5.0;

/// Reward for a squared estimation error: r_s * (1 - min(e, r_bar) / r_bar),
/// clamped into [0, r_s] so runaway errors saturate at zero instead of going
/// negative.
pub fn reward(err_sq: f64) -> f64 {
    assert!(err_sq >= 0.0, "squared error must be non-negative: {err_sq}");
    let clipped = err_sq.min(REWARD_ERROR_CEILING);
    REWARD_SCALE * (1.0 - clipped / REWARD_ERROR_CEILING)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        assert_eq!(reward(0.0), 5.0);
        assert_eq!(reward(8e4), 0.0);
        assert_eq!(reward(1e9), 0.0);
    }

    #[test]
    fn midpoint_interpolates_linearly() {
        assert!((reward(4e4) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn monotone_non_increasing_and_bounded() {
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let e = i as f64 * 100.0;
            let r = reward(e);
            assert!(r <= prev + 1e-15);
            assert!((0.0..=REWARD_SCALE).contains(&r));
            prev = r;
        }
    }

    #[test]
    #[should_panic(expected = "non-negative")]
    fn negative_error_panics() {
        reward(-1.0);
    }
}
