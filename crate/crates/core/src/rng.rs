//! Seeding conventions.
//!
//! All randomness uses `ChaCha20Rng`. A dataset seed is split into independent
//! substreams with ChaCha's 64-bit stream id, so drawing more values from one
//! substream (e.g. extra rejection rounds for the bias matrix) never shifts
//! the values drawn from another. Child seeds for sub-tasks (replications,
//! pipeline stages) are derived with a SplitMix64 finaliser.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

/// Named substreams of a single seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Confounder = 1,
    Bias = 2,
    Weights = 3,
    Labels = 4,
    Holdout = 5,
    Init = 6,
    Replicates = 7,
    Split = 8,
    Model = 9,
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Deterministic child seed; distinct `(seed, tag)` pairs give unrelated seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(tag.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
