//! Counter-based seed derivation.
//!
//! One top-level seed fans out to independent, reproducible sub-streams:
//! `derive(root, k)` is a SplitMix64 finalisation of `root` and the counter `k`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn derive(root: u64, counter: u64) -> u64 {
    let mut z = root
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(counter.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The RNG used for every random draw in the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
