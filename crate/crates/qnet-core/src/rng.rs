//! Deterministic RNG stream derivation.
//!
//! Every random consumer in an episode gets its own PCG stream derived from
//! (seed, tag), so adding draws to one consumer never perturbs another and
//! identical (config, seed) always reproduces identical trajectories.

use rand::SeedableRng;
use rand_pcg::Pcg64Mcg;

pub const STREAM_SOURCE: u64 = 1;
pub const STREAM_FACILITY: u64 = 2;
pub const STREAM_POLICY: u64 = 3;
pub const STREAM_Q_DRAW: u64 = 4;
pub const STREAM_INIT: u64 = 5;
pub const STREAM_LEARNER: u64 = 6;
pub const STREAM_BUFFER: u64 = 7;

/// splitmix64 finalizer; good avalanche for small tag differences.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn mix2(a: u64, b: u64) -> u64 {
    mix(mix(a) ^ b.wrapping_mul(0x9e3779b97f4a7c15))
}

/// Independent stream for (seed, tag).
pub fn stream(seed: u64, tag: u64) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(mix2(seed, tag))
}

/// Independent stream for (seed, tag, index), e.g. per-episode streams.
pub fn stream3(seed: u64, tag: u64, index: u64) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(mix2(mix2(seed, tag), index))
}
