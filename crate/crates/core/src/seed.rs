//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded through
//! `seed_from_u64`. Derived seeds come from the SplitMix64 finalizer, so a
//! single user seed fans out into independent, reproducible streams.

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `k`-th child stream of `seed`.
#[inline]
pub fn split(seed: u64, k: u64) -> u64 {
    mix(seed ^ mix(k.wrapping_mul(GOLDEN_GAMMA).wrapping_add(1)))
}
