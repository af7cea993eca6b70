//! Deterministic seed derivation.
//!
//! Every random stream in the toolkit is a `ChaCha8Rng` seeded from
//! `derive_stream(master, index)`. The mixing function is plain 64-bit
//! integer arithmetic, so the same `(master, index)` pair yields the same
//! child seed on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Weyl increment (2^64 / golden ratio, odd).
pub const STREAM_INCREMENT: u64 = 0x9E37_79B9_7F4A_7C15;
/// First SplitMix64 finalizer multiplier.
pub const MIX_MUL_1: u64 = 0xBF58_476D_1CE4_E5B9;
/// Second SplitMix64 finalizer multiplier.
pub const MIX_MUL_2: u64 = 0x94D0_49BB_1331_11EB;

/// SplitMix64 finalizer. A bijection on `u64`.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_MUL_1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_MUL_2);
    z ^ (z >> 31)
}

/// Child seed for stream `index` under `master_seed`.
///
/// `index -> master + (index + 1) * STREAM_INCREMENT` is injective because the
/// increment is odd, and the finalizer is a bijection, so distinct indices
/// always give distinct children for a fixed master seed.
pub fn derive_stream(master_seed: u64, index: u64) -> u64 {
    mix64(master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(STREAM_INCREMENT)))
}

/// Generator for stream `index` under `master_seed`.
pub fn stream_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_stream(master_seed, index))
}
