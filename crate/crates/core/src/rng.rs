//! Seed derivation for deterministic, parallel generation.
//!
//! Every stochastic draw in the crate comes from a [`ChaCha8Rng`] seeded via
//! [`mix64`], an avalanche mixer over `(seed XOR golden_ratio * index)`.
//! Distinct purposes use distinct stream labels, so adding draws to one
//! purpose never perturbs another. Seed -> output stability is promised for
//! this implementation, not across reimplementations.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream label: recipe-sampler draws for one image.
pub const STREAM_SAMPLER: u64 = 0x5341_4D50; // "SAMP"
/// Stream label: detector-noise draws (Poisson / read noise) for one image.
pub const STREAM_NOISE: u64 = 0x4E4F_4953; // "NOIS"
/// Stream label base: per-module-slot sub-seeds. Slot `s` of sampling attempt
/// `a` uses `STREAM_MODULE_BASE + a * 256 + s`.
pub const STREAM_MODULE_BASE: u64 = 0x4D4F_4400_0000; // "MOD"
/// Stream label base: per-run template draws, `STREAM_RUN_TEMPLATE + run_id`.
pub const STREAM_RUN_TEMPLATE: u64 = 0x5255_4E00_0000; // "RUN"

/// SplitMix64 finalizer over `seed ^ (index * phi64)`.
///
/// `phi64` is the 64-bit golden-ratio constant; the three xor-shift-multiply
/// rounds are the standard SplitMix64 avalanche.
pub fn mix64(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for the given purpose label under a base seed.
pub fn substream(seed: u64, label: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed, label))
}
