//! Seeded random streams.
//!
//! Every run is driven by a single 64-bit seed. The seed keys a ChaCha8
//! generator and independent consumers read disjoint ChaCha streams of that
//! key, so the key exchange draws exactly the same numbers whether or not an
//! attacker is listening.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream feeding party initialisation and public round data.
pub const PROTOCOL_STREAM: u64 = 0;
/// Stream feeding the attacker's candidate sampling.
pub const ATTACKER_STREAM: u64 = 1;

pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index` in an ensemble started from `base_seed`.
///
/// This is the `index`-th output (0-based) of a SplitMix64 generator whose
/// state starts at `base_seed`:
/// `splitmix64(base_seed + (index + 1) * 0x9E3779B97F4A7C15)` with wrapping
/// arithmetic.
pub fn trial_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}
