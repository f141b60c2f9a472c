//! Named, seed-derived random substreams.
//!
//! Every stochastic draw in the simulator (disruption sampling, LoS
//! Bernoulli trials, shadowing, policy tie-breaking) comes from a stream
//! derived from `(episode_seed, stream name)`. Adding a new draw site
//! therefore never perturbs the values produced by existing streams, and
//! two runs with the same seed are bit-identical on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A deterministic stream of random values, cheap to clone.
pub type Stream = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fold(seed: u64, name: &str) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    for &b in name.as_bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(FNV_PRIME);
    }
    // final avalanche so short names do not collide on low bits
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51afd7ed558ccd);
    h ^ (h >> 33)
}

/// Derive the named substream of an episode seed.
pub fn substream(seed: u64, name: &str) -> Stream {
    ChaCha8Rng::seed_from_u64(fold(seed, name))
}

/// Episode seed for index `i` of a suite starting at `seed_base`.
pub fn episode_seed(seed_base: u64, index: u64) -> u64 {
    seed_base.wrapping_add(index)
}
