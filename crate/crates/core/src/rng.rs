//! Seed derivation. Every random draw in the crate comes from a ChaCha stream
//! whose seed is a pure function of the master seed and a path of indices, so
//! results never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `index` into `seed`. Distinct (seed, index) pairs map to
/// well-separated child seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn rng_for(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn derived_rng(seed: u64, index: u64) -> Rng {
    rng_for(derive_seed(seed, index))
}

/// Purpose tags, so that streams used for different jobs never coincide.
pub(crate) mod tag {
    pub const BOOTSTRAP: u64 = 0x1001;
    pub const PERMUTE: u64 = 0x1002;
    pub const SEARCH: u64 = 0x1003;
    pub const FOLDS: u64 = 0x1004;
    pub const REP: u64 = 0x1005;
    pub const SPLIT: u64 = 0x1006;
    pub const SAMPLE: u64 = 0x1007;
    pub const MODEL: u64 = 0x1008;
    pub const UNLAWFUL_FIX: u64 = 0x1009;
}
