//! Seed derivation and per-node random streams.
//!
//! A run has one seed. Every node gets its own ChaCha8 stream keyed by that
//! seed and indexed by `(node, lane)`, so a node's draws do not depend on
//! how many draws other nodes made or in which order nodes are evaluated.
//! ChaCha is counter based, so stream selection is just a different nonce.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random lane used for contention coins.
pub const COIN_LANE: u64 = 0;
/// Random lane used for emulation signatures.
pub const SIGNATURE_LANE: u64 = 1;

const LANES: u64 = 2;

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a sequence of words into one 64-bit seed.
///
/// Used to give each run of a batch its own seed from
/// `(master_seed, n, run_index)`.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6a09_e667_f3bc_c908, |acc, &p| {
        mix64(acc.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ mix64(p))
    })
}

/// The random stream of one node in one lane.
#[derive(Debug, Clone)]
pub struct NodeRng(ChaCha8Rng);

impl NodeRng {
    pub fn new(run_seed: u64, node_index: usize, lane: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        rng.set_stream(node_index as u64 * LANES + lane);
        Self(rng)
    }

    /// True with probability `1/k`.
    #[inline]
    pub fn one_in(&mut self, k: u32) -> bool {
        self.0.random_ratio(1, k)
    }

    /// `bits` uniformly random bits, in the low end of the word.
    pub fn bits(&mut self, bits: u32) -> u64 {
        let word: u64 = self.0.random();
        if bits >= 64 {
            word
        } else {
            word & ((1u64 << bits) - 1)
        }
    }
}
