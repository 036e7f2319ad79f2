//! Seed derivation and the pinned shuffle used for partitions.
//!
//! Sub-seeds come from `split_seed(seed, index)`:
//!
//! ```text
//! z = mix64(seed ^ 0x5043_5653_504c_4954)          // tag "PCVSPLIT"
//! z = z + 0x9e37_79b9_7f4a_7c15 * (index + 1)      // wrapping
//! return mix64(z)
//! ```
//!
//! where `mix64` is the SplitMix64 finalizer. The value depends only on
//! `(seed, index)`, so streams can be generated in any order or shard.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPLIT_TAG: u64 = 0x5043_5653_504c_4954;
const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn split_seed(seed: u64, index: u64) -> u64 {
    let z = mix64(seed ^ SPLIT_TAG).wrapping_add(GAMMA.wrapping_mul(index.wrapping_add(1)));
    mix64(z)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform integer in `0..bound` by multiply-and-reject on 64-bit draws.
fn bounded<R: RngCore>(rng: &mut R, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let m = (rng.next_u64() as u128) * (bound as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

/// Fisher–Yates shuffle of `0..n`, swapping position `i` with a uniform
/// position in `0..=i` for `i = n-1, …, 1`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = bounded(&mut rng, i as u64 + 1) as usize;
        idx.swap(i, j);
    }
    idx
}
