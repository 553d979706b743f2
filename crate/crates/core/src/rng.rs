//! Named, independent random streams derived from a single run seed.
//!
//! Every consumer of randomness draws from its own ChaCha stream so that
//! adding draws in one place never shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifies one consumer of randomness within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Pairing,
    Injection,
    Selection,
    Evidence,
    MockBackend,
    Seeds,
    Hypervolume,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Pairing => 1,
            Stream::Injection => 2,
            Stream::Selection => 3,
            Stream::Evidence => 4,
            Stream::MockBackend => 5,
            Stream::Seeds => 6,
            Stream::Hypervolume => 7,
        }
    }
}

/// Create the generator for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// The per-run set of streams mutated by the generation driver.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub pairing: ChaCha8Rng,
    pub injection: ChaCha8Rng,
    pub selection: ChaCha8Rng,
    pub evidence: ChaCha8Rng,
    pub hypervolume: ChaCha8Rng,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            pairing: stream_rng(seed, Stream::Pairing),
            injection: stream_rng(seed, Stream::Injection),
            selection: stream_rng(seed, Stream::Selection),
            evidence: stream_rng(seed, Stream::Evidence),
            hypervolume: stream_rng(seed, Stream::Hypervolume),
        }
    }
}
