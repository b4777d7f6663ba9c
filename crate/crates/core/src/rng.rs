//! Deterministic seed derivation. Every random quantity in a run is drawn
//! from a ChaCha stream keyed by the master seed and a purpose tag.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STREAM_GRAPH: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
pub const STREAM_SCHEDULE: u64 = 3;
pub const STREAM_OBJECTIVE: u64 = 4;
pub const STREAM_ADVERSARY: u64 = 5;
pub const STREAM_TRIAL: u64 = 6;

/// A generator for one purpose under `seed`.
pub fn stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

/// A child seed, e.g. one per Monte-Carlo trial or per round.
pub fn child_seed(seed: u64, purpose: u64, index: u64) -> u64 {
    let mut rng = stream(seed, purpose);
    rng.set_word_pos(u128::from(index) * 16);
    rng.next_u64()
}
