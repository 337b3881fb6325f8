//! Counter-based seed derivation.
//!
//! Every random quantity in the crate is a pure function of a user seed and
//! an index (replicate number, site index). Parallel and serial runs therefore
//! produce identical numbers regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `index` derived from `seed`: `mix64(seed + (index + 1) * γ)`
/// with γ the 64-bit golden ratio constant, applied twice so that nearby
/// seeds and nearby indices decorrelate.
#[inline]
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA))))
}

/// Uniform variate in `[0, 1)` attached to `(seed, index)`, using the top 53 bits.
#[inline]
pub fn unit_uniform(seed: u64, index: u64) -> f64 {
    (derive_seed(seed, index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}
