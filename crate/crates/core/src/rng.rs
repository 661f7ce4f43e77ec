//! Seed discipline: one master seed, independent named streams.
//!
//! Each consumer gets its own ChaCha stream derived from the master seed, so
//! changing how much one consumer draws (say, the number of evaluation
//! episodes) never shifts another consumer's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Evaluation = 1,
    PostEvaluation = 2,
    Optimizer = 3,
    Environment = 4,
}

pub fn stream_rng(master_seed: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed of replication `index` of an experiment.
pub fn replication_seed(master_seed: u64, index: usize) -> u64 {
    master_seed.wrapping_add(index as u64)
}
