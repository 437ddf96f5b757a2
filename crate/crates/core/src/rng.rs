//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a seed derived here, so runs are reproducible bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed for `(stream, index)` under a base seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    mix(mix(mix(seed) ^ stream) ^ index)
}

pub fn stream(seed: u64, stream: u64, index: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}

// Stream identifiers.
pub(crate) const SPLIT: u64 = 1;
pub(crate) const EPOCH_SAMPLE: u64 = 2;
pub(crate) const INIT: u64 = 3;
pub(crate) const RUN: u64 = 4;
pub(crate) const GRADCHECK: u64 = 5;
pub(crate) const SYNTH: u64 = 6;
pub(crate) const PROBE: u64 = 7;
