//! Named, independent random streams derived from one seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Generator,
    GamSampler,
    ArimaMonteCarlo,
    Graph,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Generator => 1,
            Stream::GamSampler => 2,
            Stream::ArimaMonteCarlo => 3,
            Stream::Graph => 4,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

/// Sub-stream `index` of a named stream, for work split into independent blocks.
pub fn substream(seed: u64, which: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(which.id());
    rng
}
