//! Seeded random streams. A single 64-bit seed fans out into independent,
//! named ChaCha8 streams so each component can be reproduced in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Measurement,
    PlannerStarts,
    EvaluationTrials,
    MonteCarlo,
    Verification,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Measurement => 1,
            Stream::PlannerStarts => 2,
            Stream::EvaluationTrials => 3,
            Stream::MonteCarlo => 4,
            Stream::Verification => 5,
        }
    }
}

/// Generator for `stream` derived from `seed`.
pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    substream(seed, which, 0)
}

/// Generator for item `index` within `stream` (e.g. one evaluation trial).
pub fn substream(seed: u64, which: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((which.id() << 48) ^ index);
    rng
}
