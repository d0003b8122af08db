//! Seed derivation.
//!
//! Every random draw in the pipeline comes from a ChaCha stream seeded by
//! mixing a master seed with a path of tags (split, zone, sample index, ...),
//! so any sample can be regenerated in isolation and serial and parallel
//! generation agree bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Rng = ChaCha12Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and an ordered list of tags.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Stream tags, kept in one place so callers cannot collide by accident.
pub mod tag {
    pub const TARGET: u64 = 1;
    pub const CHANNEL: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const RANDOM_BINS: u64 = 4;
    pub const CALIBRATION: u64 = 5;
    pub const TRAIN_SPLIT: u64 = 10;
    pub const TEST_SPLIT: u64 = 11;
    pub const MODEL_INIT: u64 = 20;
    pub const SHUFFLE: u64 = 21;
}
