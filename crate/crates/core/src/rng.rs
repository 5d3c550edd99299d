//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived from
//! the run seed, a stream kind and an index, so results do not depend on the
//! order in which independent work items are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    SelfInterference = 1,
    Dataset = 2,
    Split = 3,
    Init = 4,
    Shuffle = 5,
    Evaluate = 6,
    Baseline = 7,
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 48) ^ index);
    rng
}

/// Packs two indices into one stream index.
pub fn cell_index(outer: usize, inner: usize) -> u64 {
    ((outer as u64) << 24) | inner as u64
}
