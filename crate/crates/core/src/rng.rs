//! Counter-based randomness.
//!
//! Every random stream used by the simulator is a pure function of
//! `(master seed, node, round, phase)`, so the order in which nodes are
//! processed inside a phase can never change a result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG type used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Logical phase tags used when deriving per-node streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Phase {
    Layout = 1,
    Bootstrap = 2,
    Keys = 3,
    Push = 4,
    Pull = 5,
    Renew = 6,
    Adversary = 7,
    Observe = 8,
    Poison = 9,
    Samplers = 10,
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn derive_seed(master: u64, node: u64, round: u64, phase: Phase) -> u64 {
    let mut h = mix64(master ^ GOLDEN);
    for word in [node, round, phase as u64] {
        h = mix64(h.wrapping_add(GOLDEN) ^ word);
    }
    h
}

pub fn stream(master: u64, node: u64, round: u64, phase: Phase) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, node, round, phase))
}
