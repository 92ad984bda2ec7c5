//! Deterministic seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `counter` under `master`. Depends only on the two inputs,
/// so any single stream can be reproduced without replaying the others.
#[inline]
pub fn derive(master: u64, counter: u64) -> u64 {
    mix64(mix64(master) ^ counter.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named sub-streams used during training.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const PAIRS: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const VALIDATION: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const MEMBER: u64 = 6;
    pub const LOOPS: u64 = 7;
    pub const MC: u64 = 8;
}
