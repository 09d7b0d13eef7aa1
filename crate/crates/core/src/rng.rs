//! Deterministic random streams.
//!
//! Every consumer that needs randomness takes an explicit stream. Parallel
//! workers never share a stream; child stream `k` of a parent seed is seeded
//! from a hash of `(parent_seed, k)` so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed derived for child `k` of `parent`.
pub fn child_seed(parent: u64, k: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(k.wrapping_mul(GOLDEN).wrapping_add(1)))
}

/// Root stream for a seed.
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Child stream `k` of `parent`.
pub fn child_stream(parent: u64, k: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(child_seed(parent, k))
}
