//! Seeded random streams.
//!
//! Every episode owns a handful of independent ChaCha streams derived from its
//! seed. The ground-truth simulation draws only from [`Stream::Truth`], so a
//! replay that changes the ego's decisions (or skips the filter entirely)
//! consumes exactly the same random numbers as the original run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Intent draw, scenario jitter, process noise and obstacle observations.
    Truth = 0,
    /// Particle filter initialisation, propagation and resampling.
    Filter = 1,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// SplitMix64 finaliser; used to decorrelate base seeds of unpaired runs.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
