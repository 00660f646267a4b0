//! Seed fan-out: one user seed becomes independent per-stage and
//! per-item streams through SplitMix64.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `stream` of a generator seeded with `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream))
}

pub fn rng_for(base: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream))
}

/// Fixed per-stage salts; changing any of them changes every output.
pub mod stage {
    pub const SAMPLE: u64 = 0x5A4D_504C_0000_0001;
    pub const SYNTH_EVENTS: u64 = 0x5359_4E45_0000_0002;
    pub const SYNTH_CHOICES: u64 = 0x5359_4E43_0000_0003;
}
