//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a 64-bit
//! value obtained by mixing a master seed with a list of stream labels through
//! SplitMix64. Work split across threads always derives its stream from the
//! task coordinates, never from scheduling order, so results do not depend on
//! the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and a path of stream labels.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    let mut s = mix64(master.wrapping_add(GOLDEN));
    for (depth, &label) in path.iter().enumerate() {
        s = mix64(s ^ mix64(label.wrapping_add(GOLDEN.wrapping_mul(depth as u64 + 2))));
    }
    s
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(master: u64, path: &[u64]) -> Rng {
    rng(derive(master, path))
}
