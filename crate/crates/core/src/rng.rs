//! Seeded random streams. Each consumer draws from its own stream so that,
//! for example, initializing a normalizer never shifts the backbone weights
//! or the shuffle order of a run with the same seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Weights = 0,
    Normalizer = 1,
    Shuffle = 2,
    Synth = 3,
}

pub fn stream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

pub(crate) fn describe(seed: u64) -> String {
    format!("chacha8 seed={seed} streams: weights=0 normalizer=1 shuffle=2")
}
