//! Seeded, portable random streams.
//!
//! Every simulation seed owns several independent ChaCha8 streams so that the
//! randomness consumed by one concern (e.g. reshuffling) never shifts another
//! (e.g. prefix queries). ChaCha8 output is specified bit-for-bit and does not
//! depend on platform or word size.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purpose of a random stream derived from a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Permutations for epoch reshuffling.
    Shuffle,
    /// Uniform draws for slot selection and prefix queries.
    Prefix,
    /// Experiment setup such as randomly chosen fixed priorities.
    Setup,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Shuffle => 0,
            Stream::Prefix => 1,
            Stream::Setup => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimRng(ChaCha8Rng);

impl SimRng {
    /// The default (`Prefix`) stream for `seed`.
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, Stream::Prefix)
    }

    pub fn stream(seed: u64, stream: Stream) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream.id());
        SimRng(rng)
    }
}

impl RngCore for SimRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}
