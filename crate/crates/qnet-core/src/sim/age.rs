use super::Measurement;

/// Agent-side age-of-information clock.
///
/// Age increments by one in any slot without a strictly fresher delivery and
/// resets to `now - generated_at` when a fresher measurement arrives. A
/// delivery whose generation time is not newer than the freshest one already
/// held is stale: it still increments the age, it is not an error.
#[derive(Debug, Clone, Copy, Default)]
pub struct AgeClock {
    age: u64,
    freshest_generation_time: Option<u64>,
}

impl AgeClock {
    pub fn new() -> Self {
        AgeClock::default()
    }

    pub fn age(&self) -> u64 {
        self.age
    }

    pub fn freshest_generation_time(&self) -> Option<u64> {
        self.freshest_generation_time
    }

    /// Advances one slot. Returns true when the delivery was fresh and the
    /// age was reset (the caller then adopts the measurement as its latest).
    pub fn tick(&mut self, delivered: Option<&Measurement>, now: u64) -> bool {
        if let Some(m) = delivered {
            assert!(m.generated_at <= now, "delivery from the future");
            let fresher = match self.freshest_generation_time {
                Some(t) => m.generated_at > t,
                None => true,
            };
            if fresher {
                self.age = now - m.generated_at;
                self.freshest_generation_time = Some(m.generated_at);
                return true;
            }
        }
        self.age += 1;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SourceState;

    fn meas(t: u64) -> Measurement {
        Measurement {
            state: SourceState::default(),
            generated_at: t,
        }
    }

    #[test]
    fn no_delivery_increments() {
        let mut c = AgeClock::new();
        c.tick(Some(&meas(0)), 0);
        assert_eq!(c.age(), 0);
        for want in 1..=5 {
            c.tick(None, want);
            assert_eq!(c.age(), want);
        }
    }

    #[test]
    fn fresh_delivery_resets_to_measurement_delay() {
        let mut c = AgeClock::new();
        c.tick(Some(&meas(0)), 0);
        for now in 1..=9 {
            c.tick(None, now);
        }
        // Measurement generated at slot 4, received at slot 10: age = 6.
        let reset = c.tick(Some(&meas(4)), 10);
        assert!(reset);
        assert_eq!(c.age(), 6);
        assert_eq!(c.freshest_generation_time(), Some(4));
    }

    #[test]
    fn stale_delivery_increments_instead_of_resetting() {
        let mut c = AgeClock::new();
        c.tick(Some(&meas(6)), 6);
        assert_eq!(c.age(), 0);
        c.tick(None, 7);
        c.tick(None, 8);
        c.tick(None, 9);
        c.tick(None, 10);
        assert_eq!(c.age(), 4);
        // Older generation time than the held measurement: age keeps rising.
        let reset = c.tick(Some(&meas(3)), 11);
        assert!(!reset);
        assert_eq!(c.age(), 5);
        // Equal generation time is also stale.
        let reset = c.tick(Some(&meas(6)), 12);
        assert!(!reset);
        assert_eq!(c.age(), 6);
    }

    #[test]
    fn age_equals_now_minus_freshest_along_any_path() {
        let mut c = AgeClock::new();
        let mut rng = crate::rng::stream(5, 31);
        use rand::Rng;
        c.tick(Some(&meas(0)), 0);
        let mut freshest = 0u64;
        for now in 1..2000u64 {
            let delivered = if rng.gen::<f64>() < 0.3 {
                let gen = now.saturating_sub(rng.gen_range(0..20));
                Some(meas(gen))
            } else {
                None
            };
            let was_fresh = c.tick(delivered.as_ref(), now);
            if was_fresh {
                freshest = delivered.unwrap().generated_at;
            }
            assert_eq!(c.age(), now - freshest, "sample-path identity at {now}");
        }
    }
}
