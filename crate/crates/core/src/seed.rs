//! Counter-based seed derivation.
//!
//! Every stochastic stream is keyed by a tuple of integers (base seed, env
//! index, update index, ...) so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes an ordered list of keys into one 64-bit seed.
pub fn derive_seed(keys: &[u64]) -> u64 {
    keys.iter()
        .fold(0x6A09_E667_F3BC_C909_u64, |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream(keys: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(keys))
}

/// Domain tags keep streams for different purposes disjoint.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const ROLLOUT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const EPISODE: u64 = 4;
}
