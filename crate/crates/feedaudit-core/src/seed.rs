//! Deterministic seed derivation.
//!
//! All randomness flows from one root [`Seed`] through a labeled tree: a seed
//! derives children by string label ([`Seed::child`]) and by index
//! ([`Seed::index`]), and any node can be turned into a stream generator with
//! [`Seed::rng`]. Derivation is a pure function of the root value and the
//! path, so independent subtrees can be evaluated in any order, or in
//! parallel, without changing a single bit of output.
//!
//! Labels hash with FNV-1a and every derivation step finishes with a
//! SplitMix64 mix, so adjacent indices and similar labels land far apart in
//! seed space. Streams use ChaCha12, seeded from the node's 64-bit value.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// A node in the seed derivation tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(u64);

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Seed {
    /// Wraps a root value.
    pub const fn new(value: u64) -> Self {
        Seed(value)
    }

    /// The node's 64-bit value.
    pub const fn value(self) -> u64 {
        self.0
    }

    /// Derives the child named `label`.
    #[must_use]
    pub fn child(self, label: &str) -> Self {
        Seed(splitmix64(self.0 ^ fnv1a64(label.as_bytes())))
    }

    /// Derives the `i`-th indexed child.
    #[must_use]
    pub fn index(self, i: u64) -> Self {
        Seed(splitmix64(self.0 ^ splitmix64(i.wrapping_add(0x517c_c1b7_2722_0a95))))
    }

    /// A ChaCha12 stream generator seeded from this node.
    pub fn rng(self) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.0)
    }
}
