//! Counter-based seed splitting.
//!
//! Every consumer of randomness owns a fixed stream id. The seed for
//! `(base, stream, index)` is a SplitMix64 hash of the three values, so adding
//! a new stream never shifts the draws of an existing one, and trial `k` sees
//! the same numbers whatever order the trials run in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Topology generation (setup, index 0).
pub const TOPOLOGY: u64 = 1;
/// Initial values of all agents (setup, index 0).
pub const INITIAL: u64 = 2;
/// Malicious expectations `c_m` (setup, index 0).
pub const EXPECTATIONS: u64 = 3;
/// Trust observations (per trial).
pub const TRUST: u64 = 4;
/// Attack Bernoulli flags (per trial).
pub const ATTACK: u64 = 5;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn split_seed(base: u64, stream: u64, index: u64) -> u64 {
    mix(mix(mix(base) ^ stream) ^ index)
}

pub fn stream_rng(base: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split_seed(base, stream, index))
}
