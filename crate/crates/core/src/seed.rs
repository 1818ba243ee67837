//! Counter-based seed derivation.
//!
//! Every random stream in the crate is keyed by `mix(base, a, b)`, so a trial
//! or resample can be reproduced in isolation regardless of how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and two counters.
pub fn mix(base: u64, a: u64, b: u64) -> u64 {
    let h = splitmix64(base ^ splitmix64(a.wrapping_mul(GOLDEN)));
    splitmix64(h ^ splitmix64(b.wrapping_add(0x632b_e59b_d9b4_e019)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream ids used inside a single trial.
pub mod stream {
    pub const DATA: u64 = 0;
    pub const SPLIT: u64 = 1;
    pub const TRAIN_RESAMPLE: u64 = 2;
    pub const TEST: u64 = 3;
}
