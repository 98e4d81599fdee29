//! Seeded randomness. Every random choice in the pipeline flows from here.

pub use rand_chacha::ChaCha8Rng as Rng;
use rand::SeedableRng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Per-item stream, independent of how items are scheduled.
pub fn sub_rng(seed: u64, index: u64) -> Rng {
    Rng::seed_from_u64(seed ^ index)
}
