//! Seed derivation and per-replication random streams.
//!
//! Replication `i` of a run with base seed `s` uses seed `split(s, i)`, a
//! SplitMix64 finalizer applied to `s + (i + 1)·γ` with `γ` the golden-ratio
//! increment. Each replication seed keys three ChaCha8 generators that differ
//! only in their stream id, so transitions, rewards and policy randomization
//! never share draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub const TRANSITION_STREAM: u64 = 0;
pub const REWARD_STREAM: u64 = 1;
pub const POLICY_STREAM: u64 = 2;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `index` under `base`.
pub fn split(base: u64, index: u64) -> u64 {
    mix64(base.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// The three independent uniform sources of one trajectory.
#[derive(Clone, Debug)]
pub struct Streams {
    pub transition: ChaCha8Rng,
    pub reward: ChaCha8Rng,
    pub policy: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(id);
            r
        };
        Streams {
            transition: stream(TRANSITION_STREAM),
            reward: stream(REWARD_STREAM),
            policy: stream(POLICY_STREAM),
        }
    }
}

/// Uniform on `[0, 1)`.
#[inline]
pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}
