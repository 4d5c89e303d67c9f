//! Seed splitting.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! single master seed. Child seeds are derived by folding a path of indices
//! into the parent with the SplitMix64 finalizer, so `derive(s, &[2, 0])`
//! is the same no matter which other streams were drawn first.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &i| splitmix64(acc ^ splitmix64(i)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Well-known stream indices below a dataset or instance seed.
pub mod stream {
    pub const INPUTS: u64 = 0;
    pub const NOISE: u64 = 1;
    pub const IRRELEVANT: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
}
