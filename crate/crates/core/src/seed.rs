//! Seed splitting.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by a `u64` seed
//! and a stream id. Scenario `i` of a run with master seed `m` uses seed
//! `m + i` (wrapping); the stream id separates independent consumers of the
//! same scenario so that enabling or disabling one scheme never perturbs the
//! random draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids for the consumers of a per-scenario seed.
pub mod stream {
    pub const SCENARIO: u64 = 0;
    pub const WIDE_SWEEP: u64 = 1;
    pub const CANDIDATES: u64 = 2;
    pub const EFFECTIVE: u64 = 3;
    pub const EXHAUSTIVE: u64 = 4;
    pub const FC: u64 = 5;
    pub const OMP: u64 = 6;
    pub const TRAIN_INIT: u64 = 7;
    pub const TRAIN_SHUFFLE: u64 = 8;
    pub const POWER: u64 = 9;
}

/// Seed of the `index`-th scenario derived from a master seed.
pub fn split(master: u64, index: u64) -> u64 {
    master.wrapping_add(index)
}

/// Deterministic generator for `(seed, stream)`.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
