//! Deterministic seed splitting. Every stochastic stage draws from its own
//! ChaCha stream derived from the single root seed, so stages can be
//! reordered or skipped without perturbing each other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Likelihood,
    Notears,
    GbtImportance,
    LogregImportance,
    SynthGraph,
    SynthSample,
    SynthOutcome,
    Custom(u64),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Likelihood => 1,
            Stream::Notears => 2,
            Stream::GbtImportance => 3,
            Stream::LogregImportance => 4,
            Stream::SynthGraph => 5,
            Stream::SynthSample => 6,
            Stream::SynthOutcome => 7,
            Stream::Custom(k) => 1_000 + k,
        }
    }
}

pub fn stream_rng(root: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream.id());
    rng
}
