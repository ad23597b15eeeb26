//! Seeded random streams.
//!
//! Every consumer of randomness takes a `(seed, stream)` pair. Streams with
//! the same seed and different ids are independent ChaCha8 keystreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Well-known stream ids so that unrelated consumers never share a stream.
pub mod streams {
    pub const SWITCHING: u64 = 1;
    pub const INITIAL_STATE: u64 = 2;
    pub const MOBILITY: u64 = 3;
    pub const RATES: u64 = 4;
    pub const FALSIFIER: u64 = 5;
    /// Base for per-run substreams in ensembles: `RUN_BASE + run_index`.
    pub const RUN_BASE: u64 = 1 << 32;
}

pub fn stream(seed: u64, stream_id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Seed for run `index` of an ensemble rooted at `master`.
pub fn run_seed(master: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(master, streams::RUN_BASE + index).next_u64()
}
