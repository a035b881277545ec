//! Seeded random streams.
//!
//! Every stochastic step draws from a ChaCha8 stream derived from a user seed
//! and a small integer tag, so independent sub-tasks (CV folds, GA
//! generations) get independent streams regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A stream keyed by `(seed, tag)`.
pub fn stream(seed: u64, tag: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(mix(seed ^ mix(tag.wrapping_add(0x9e37_79b9_7f4a_7c15))))
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
