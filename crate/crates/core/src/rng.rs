//! Seed derivation.
//!
//! Every stochastic step draws from its own ChaCha stream whose seed is a hash
//! of the run seed and a path of tags, e.g. `(seed, FIT, k, restart)`. Streams
//! are independent of evaluation order, so per-K work can run in parallel and
//! still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub mod tag {
    pub const SAMPLE: u64 = 0x5341_4d50;
    pub const FIT: u64 = 0x4649_54;
    pub const ASSIGN: u64 = 0x4153_53;
    pub const MMD: u64 = 0x4d4d_44;
    pub const MODEL_SAMPLE: u64 = 0x4d53_414d;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a path of stream tags.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}
