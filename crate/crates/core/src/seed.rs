//! Seed derivation.
//!
//! A run carries one global seed. Every independent consumer of randomness
//! (a data generator, a training loop, one heatmap cell, one per-sample mask)
//! gets its own stream id and derives a generator from `(seed, stream)`, so
//! jobs can run in any order or on any thread and still see identical draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Well-known stream ids. Ad hoc streams (per sample, per cell) are built
/// on top of these with [`derive_seed`].
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const DATA: u64 = 5;
    pub const HEATMAP: u64 = 6;
    pub const SAMPLE_MASK: u64 = 7;
    pub const PLACEMENT: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_for(seed: u64, stream: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream))
}
