//! Deterministic seed derivation.
//!
//! Every randomized component owns a sub-seed derived from the master seed
//! and a fixed tag, so independent streams never overlap and results do not
//! depend on thread count or call order.

/// Tags for the fixed sub-streams of a run.
pub mod tag {
    pub const INIT_CLOUD: u64 = 1;
    pub const CHAIN_NOISE: u64 = 2;
    pub const TARGET_SAMPLES: u64 = 3;
    pub const TRAIN_INIT: u64 = 4;
    pub const TRAIN_SHUFFLE: u64 = 5;
    pub const EVAL_CLOUD: u64 = 6;
    pub const REPETITION: u64 = 7;
}

/// SplitMix64 step; mixes `seed` and `tag` into a new 64-bit seed.
pub fn derive(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(tag.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for repetition `rep` of a multi-repetition run.
pub fn repetition_seed(master: u64, rep: usize) -> u64 {
    derive(derive(master, tag::REPETITION), rep as u64)
}
