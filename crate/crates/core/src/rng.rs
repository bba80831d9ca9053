//! Seeded, splittable random streams.
//!
//! Every run derives independent ChaCha8 streams from one integer seed, one
//! per purpose, so e.g. changing how many masks are drawn never perturbs the
//! weight initialization or the data order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    DataOrder = 2,
    Masks = 3,
    Synthesis = 4,
    Sampling = 5,
}

pub fn stream(seed: u64, purpose: Stream) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}
