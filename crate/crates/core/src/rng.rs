//! Deterministic RNG streams.
//!
//! Every randomised step (fold shuffles, subsamples, synthetic draws) takes
//! its own generator derived from the user seed plus a few stream labels, so
//! results never depend on the order in which parallel work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a seed with an arbitrary list of stream labels into a 64-bit key.
pub fn stream_key(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(seed), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

pub fn stream(seed: u64, labels: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, labels))
}

// Domain tags keep streams of different subsystems apart.
pub(crate) const TAG_SUBSAMPLE: u64 = 0x5355_4253;
pub(crate) const TAG_FOLDS: u64 = 0x464f_4c44;
pub(crate) const TAG_SYNTH: u64 = 0x5359_4e54;
