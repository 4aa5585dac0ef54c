//! Counter-based seed derivation.
//!
//! Every random stream in a run is derived from one master seed by folding a
//! sequence of integer counters through SplitMix64. A sweep cell, for
//! example, uses `derive(master, &[tag, fold, hidden, repeat])`, so its
//! stream is independent of the order in which cells are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, counters: &[u64]) -> u64 {
    counters
        .iter()
        .fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// FNV-1a, used to turn identifiers such as participant ids into counters.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags, so different consumers of the same counters never collide.
pub mod tag {
    pub const PARTICIPANT: u64 = 1;
    pub const SESSION: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const NEGATIVES: u64 = 6;
    pub const STORE: u64 = 7;
}
