//! Seeded random streams.
//!
//! All stochastic choices in the crate draw from a [`Stream`]: a 64-bit state
//! that can be forked into named or indexed substreams without correlation.
//! Forking lets independent pieces of work (per-epoch shuffles, per-restart
//! inits, per-seed retrains) consume randomness without sharing a cursor, so
//! adding draws to one component never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// A forkable seed. `child`/`index` derive statistically independent
/// substreams; `rng` expands the state into a ChaCha generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream { state: splitmix(seed) }
    }

    /// Fork a substream labelled by `tag`.
    pub fn child(&self, tag: &str) -> Self {
        Stream { state: splitmix(self.state ^ fnv1a(tag.as_bytes())) }
    }

    /// Fork the `i`-th substream (per-epoch, per-restart, per-seed, ...).
    pub fn index(&self, i: u64) -> Self {
        Stream { state: splitmix(self.state.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(i | 1).rotate_left(17) ^ i) }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        let mut bytes = [0u8; 32];
        let mut s = self.state;
        for chunk in bytes.chunks_exact_mut(8) {
            s = splitmix(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChaCha12Rng::from_seed(bytes)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
