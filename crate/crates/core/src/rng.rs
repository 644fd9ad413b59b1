//! Deterministic, splittable random streams.
//!
//! Every Monte Carlo replication draws from its own ChaCha stream keyed by
//! `(seed, replication index)`, so results do not depend on how replications
//! are scheduled across threads or partitioned into batches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Source of per-replication random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReplicationStreams {
    seed: u64,
}

impl ReplicationStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The stream owned by replication `index`.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}
