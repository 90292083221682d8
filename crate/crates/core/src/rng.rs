//! Seeded random streams. Each concern draws from its own ChaCha stream so
//! that, e.g., changing the exploration noise does not shift episode starts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Environment = 2,
    Exploration = 3,
    Scheme = 4,
    Replay = 5,
    Record = 6,
    Evaluation = 7,
    Split = 8,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Stream keyed by an extra index, for per-cell or per-combination work.
pub fn substream(seed: u64, which: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(which as u64);
    rng
}
