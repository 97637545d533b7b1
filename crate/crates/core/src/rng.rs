//! Seeded random number generation.
//!
//! Every randomised routine uses [`ChaCha8Rng`] seeded through
//! [`SeedableRng::seed_from_u64`]. Independent sub-experiments (trials,
//! samplers, anchors) get their own seed from [`derive_seed`]: the base seed
//! selects a ChaCha key, the sub-experiment index selects the ChaCha stream, and
//! the first output word of that stream is the derived seed. Derived seeds are
//! written next to every result row so any single row can be replayed with
//! [`rng_from_seed`].

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for sub-experiment `stream` of the run seeded with `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream);
    rng.next_u64()
}
