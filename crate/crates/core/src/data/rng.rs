//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha8 stream: the key is
//! derived from the user seed and the 64-bit stream id selects an independent
//! keystream, so adding draws to one stream never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Features = 0,
    Placement = 1,
    BackgroundTarget = 2,
    SubgroupTarget = 3,
    Gradcheck = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
