//! Seeded, independent random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived
//! from the run seed, so adding or removing one consumer (for example the
//! upsampling head when only one scale is trained) never shifts the draws
//! seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    ModelInit = 2,
    HeadInit = 3,
    Mask = 4,
    Order = 5,
    ClassifierInit = 6,
    Augment = 7,
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    stream_at(seed, which as u64)
}

pub fn stream_at(seed: u64, id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
