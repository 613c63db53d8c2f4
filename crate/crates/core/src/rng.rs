//! Deterministic random streams.
//!
//! Every Monte Carlo trial owns a ChaCha8 stream keyed by a 64-bit seed.
//! Seeds are derived from `(base_seed, alpha_index, trial_index)` by
//! [`trial_seed`], so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Golden-ratio increment used to spread the alpha index.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: a bijective avalanche mix on 64-bit words.
pub fn mix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `mix64(base ^ (alpha_index * GOLDEN_GAMMA) ^ trial_index)`.
pub fn trial_seed(base_seed: u64, alpha_index: u64, trial_index: u64) -> u64 {
    mix64(base_seed ^ alpha_index.wrapping_mul(GOLDEN_GAMMA) ^ trial_index)
}

pub fn stream(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
