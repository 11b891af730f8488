use serde::{Deserialize, Serialize};

use crate::Error;

/// The one place slots are converted to seconds. Everything internal counts
/// slots; every externally reported age goes through [`SlotClock::seconds`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SlotClock {
    pub seconds_per_slot: f64,
}

impl Default for SlotClock {
    fn default() -> Self {
        SlotClock {
            seconds_per_slot: 0.1,
        }
    }
}

impl SlotClock {
    pub fn seconds(&self, slots: f64) -> f64 {
        slots * self.seconds_per_slot
    }
}

/// Source process parameters: a 2D double integrator with truncated-Gaussian
/// acceleration and a hard speed cap.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceParams {
    pub max_speed: f64,
    pub acceleration_std: f64,
    pub acceleration_bound: f64,
    /// Initial positions are drawn uniformly from +-this range (meters).
    pub init_position_range: f64,
    /// Initial velocity components are drawn uniformly from +-this range.
    pub init_speed_range: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        SourceParams {
            max_speed: 10.0,
            acceleration_std: 1.0,
            acceleration_bound: 3.0,
            init_position_range: 5.0,
            init_speed_range: 5.0,
        }
    }
}

/// Per-episode configuration. `q` is drawn uniformly from `q_range` at
/// episode start and held fixed for the whole episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub q_range: (f64, f64),
    pub episode_length: u64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub seed: u64,
    #[serde(default = "default_warmup")]
    pub warmup_slots: u64,
    #[serde(default)]
    pub source: SourceParams,
    #[serde(default)]
    pub clock: SlotClock,
}

fn default_gamma() -> f64 {
    0.99
}

fn default_warmup() -> u64 {
    100
}

impl EpisodeConfig {
    pub fn new(q_range: (f64, f64), episode_length: u64, seed: u64) -> Self {
        EpisodeConfig {
            q_range,
            episode_length,
            gamma: default_gamma(),
            seed,
            warmup_slots: default_warmup(),
            source: SourceParams::default(),
            clock: SlotClock::default(),
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let (lo, hi) = self.q_range;
        if !(0.0 < lo && lo < hi && hi <= 1.0) {
            return Err(Error::Config(format!(
                "q_range must satisfy 0 < low < high <= 1, got ({lo}, {hi})"
            )));
        }
        if self.episode_length < 1 {
            return Err(Error::Config("episode_length must be >= 1".into()));
        }
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma must be in (0,1), got {}",
                self.gamma
            )));
        }
        if self.warmup_slots >= self.episode_length {
            return Err(Error::Config(format!(
                "warmup_slots {} must be smaller than episode_length {}",
                self.warmup_slots, self.episode_length
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rejects_bad_ranges() {
        let mut cfg = EpisodeConfig::new((0.3, 1.0), 100, 1);
        cfg.warmup_slots = 10;
        assert!(cfg.validate().is_ok());
        cfg.q_range = (0.0, 1.0);
        assert!(cfg.validate().is_err());
        cfg.q_range = (0.5, 0.5);
        assert!(cfg.validate().is_err());
        cfg.q_range = (0.3, 1.1);
        assert!(cfg.validate().is_err());
        cfg.q_range = (0.3, 1.0);
        cfg.warmup_slots = 100;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = EpisodeConfig::new((0.05, 0.1), 2000, 7);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: EpisodeConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.q_range, cfg.q_range);
        assert_eq!(back.seed, 7);
        assert_eq!(back.clock.seconds_per_slot, 0.1);
    }
}
