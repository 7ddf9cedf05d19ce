//! Splittable seeding for reproducible Monte Carlo streams.
//!
//! A single root seed is refined by a sequence of integer tags
//! (study, epsilon index, replica, branch, channel). Each refinement is a
//! SplitMix64 finalisation of the parent state mixed with the tag, so adding
//! replicas never changes the streams of the existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Channel tag for the slow-noise increments (the Q1 Wiener process).
pub const SLOW_NOISE: u64 = 0x51;
/// Channel tag for the fast-noise increments (the Q2 Wiener process).
pub const FAST_NOISE: u64 = 0xFA;

/// Study tags for the first refinement of the root seed.
pub mod study {
    pub const ERGODIC: u64 = 1;
    pub const MIXING: u64 = 2;
    pub const BBAR: u64 = 3;
    pub const DIFFUSION: u64 = 4;
    pub const CONVERGENCE: u64 = 5;
    pub const GAP: u64 = 6;
    pub const WEAK: u64 = 7;
    pub const MOMENTS: u64 = 8;
    pub const HOLDER: u64 = 9;
    pub const REMAINDER: u64 = 10;
    pub const SIMULATE: u64 = 11;
    pub const AVERAGED: u64 = 12;
}

/// Seed of replica `index` in `study` under the root `seed`.
pub fn replica_seed(seed: u64, study: u64, index: usize) -> StreamSeed {
    StreamSeed::root(seed).child(study).child(index as u64)
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Position in the stream tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSeed(pub u64);

impl StreamSeed {
    pub fn root(seed: u64) -> Self {
        StreamSeed(mix64(seed.wrapping_add(GOLDEN_GAMMA)))
    }

    pub fn child(self, tag: u64) -> Self {
        StreamSeed(mix64(self.0 ^ mix64(tag.wrapping_mul(GOLDEN_GAMMA).wrapping_add(GOLDEN_GAMMA))))
    }

    /// Convenience for a chain of tags.
    pub fn path(self, tags: &[u64]) -> Self {
        tags.iter().fold(self, |s, &t| s.child(t))
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut bytes = [0u8; 32];
        let mut state = self.0;
        for chunk in bytes.chunks_mut(8) {
            state = state.wrapping_add(GOLDEN_GAMMA);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(bytes)
    }
}

/// Independent slow and fast noise generators for one replica.
#[derive(Debug, Clone)]
pub struct NoiseStreams {
    pub slow: ChaCha8Rng,
    pub fast: ChaCha8Rng,
}

impl NoiseStreams {
    pub fn new(seed: StreamSeed) -> Self {
        NoiseStreams { slow: seed.child(SLOW_NOISE).rng(), fast: seed.child(FAST_NOISE).rng() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn children_differ_and_are_stable() {
        let root = StreamSeed::root(7);
        assert_eq!(root, StreamSeed::root(7));
        assert_ne!(root.child(0), root.child(1));
        assert_ne!(root.child(1).child(2), root.child(2).child(1));
        let a: u64 = root.child(3).rng().random();
        let b: u64 = root.child(3).rng().random();
        assert_eq!(a, b);
    }

    #[test]
    fn path_matches_repeated_child() {
        let root = StreamSeed::root(11);
        assert_eq!(root.path(&[1, 2, 3]), root.child(1).child(2).child(3));
    }
}
