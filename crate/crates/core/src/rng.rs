//! Seeded random streams.
//!
//! Every consumer of randomness derives its generator from a master seed and
//! a stream index, so independent concerns (initialization, dropout,
//! DropEdge, split generation) never share a sequence.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Name recorded alongside results so runs can be attributed to a generator.
pub const GENERATOR_FAMILY: &str = "ChaCha8Rng";

/// Stream used for weight initialization.
pub const STREAM_INIT: u64 = 0;
/// Stream consumed by dropout masks on the tape.
pub const STREAM_DROPOUT: u64 = 1;
/// Stream consumed by per-epoch DropEdge resampling.
pub const STREAM_DROPEDGE: u64 = 2;
/// Stream used to generate random data splits.
pub const STREAM_SPLITS: u64 = 3;

/// Generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
