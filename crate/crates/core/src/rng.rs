//! Counter-based random substreams.
//!
//! Every random draw in the simulator comes from a stream identified by the
//! global seed plus a short path of integers (a purpose tag followed by
//! indices such as episode, step, sweep point or Monte Carlo chunk). The path
//! is folded into a 64-bit key with SplitMix64 and the key seeds a ChaCha8
//! generator. Streams never depend on the order in which they are created,
//! so parallel schedules reproduce sequential results bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags used as the first path element.
pub mod tag {
    pub const ENV_RESET: u64 = 1;
    pub const ACTION: u64 = 2;
    pub const STEP_BER: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const CRITIC_NOISE: u64 = 5;
    pub const ACTOR_NOISE: u64 = 6;
    pub const INIT: u64 = 7;
    pub const SWEEP_CHANNEL: u64 = 10;
    pub const SWEEP_BER: u64 = 11;
    pub const SNR_BER: u64 = 12;
    pub const MC_CHUNK: u64 = 20;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a seed and a path into a stream key.
pub fn stream_key(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Generator for an already-derived key.
pub fn rng_from_key(key: u64) -> SimRng {
    SimRng::seed_from_u64(key)
}

/// Generator for `(seed, path)`.
pub fn substream(seed: u64, path: &[u64]) -> SimRng {
    rng_from_key(stream_key(seed, path))
}
