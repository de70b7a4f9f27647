//! Reproducible, independently seeded random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of tags into a new 64-bit seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// A stream that depends only on `(seed, tags)`, so work split across
/// threads draws the same numbers regardless of scheduling.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

/// Tags separating the purposes that draw from the run seed.
pub mod purpose {
    pub const INIT: u64 = 1;
    pub const WALK: u64 = 2;
    pub const TRAIN_NEGATIVES: u64 = 3;
    pub const VALIDATION: u64 = 4;
    pub const EVALUATION: u64 = 5;
    pub const WINDOW: u64 = 6;
    pub const SYNTHETIC: u64 = 7;
}
