//! Deterministic seed derivation for parallel replicates.
//!
//! Every replicate gets its own ChaCha8 stream seeded from
//! `derive_seed(master, index)`, so results do not depend on how
//! replicates are scheduled across workers.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG used by all simulation code. Small-round ChaCha: fast, seedable,
/// identical streams on every platform.
pub type SimRng = ChaCha8Rng;

/// Odd multiplier of the SplitMix64 generator (2^64 / golden ratio).
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64-style avalanche of `master XOR index * GOLDEN_GAMMA`.
///
/// The multiplier is odd, so `index -> index * GOLDEN_GAMMA` is a bijection
/// on u64, and the finalizer below is a bijection as well; for a fixed
/// master the map `index -> seed` is therefore injective.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for replicate `index` of a run with the given master seed.
pub fn replicate_rng(master: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, index))
}
