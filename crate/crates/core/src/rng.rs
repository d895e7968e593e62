//! Seeded RNG streams.
//!
//! Every randomized stage (weight init, replay sampling, exploration noise,
//! dropout) draws from its own ChaCha stream derived from one run seed, so
//! changing how often one stage draws can never perturb another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage labels for substream derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Sampling,
    Noise,
    Dropout,
    Split,
    Generator,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Sampling => 2,
            Stream::Noise => 3,
            Stream::Dropout => 4,
            Stream::Split => 5,
            Stream::Generator => 6,
        }
    }
}

/// Returns the ChaCha stream for a stage under the given run seed.
pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Plain seeded RNG for operations that take a seed directly.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
