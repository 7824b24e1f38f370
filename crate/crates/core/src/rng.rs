//! Deterministic random streams.
//!
//! Every random quantity in a run is drawn from a [`SeedStream`]: a ChaCha8
//! generator keyed by the master seed, with the 64-bit ChaCha stream id
//! derived from a path of integer tags. The path for a chain in a scan is
//! `[CHAIN, alpha_index, temperature_index, trial]`; for its pattern set it
//! is `[PATTERNS, alpha_index, trial]` (or `[PATTERNS, alpha_index,
//! temperature_index, trial]` when pattern sets are not shared across
//! temperatures). Because the mapping from path to stream is a pure
//! function, results never depend on thread count or execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tag for chain dynamics streams.
pub const CHAIN: u64 = 1;
/// Tag for pattern-set streams.
pub const PATTERNS: u64 = 2;

/// A position in the tree of random streams rooted at a master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedStream {
    master: u64,
    id: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self { master, id: 0 }
    }

    /// Derives the sub-stream addressed by `tag`.
    pub fn child(self, tag: u64) -> Self {
        Self {
            master: self.master,
            id: splitmix64(self.id.rotate_left(17) ^ splitmix64(tag.wrapping_add(0xA076_1D64_78BD_642F))),
        }
    }

    /// Convenience for `child(a).child(b)...`.
    pub fn path(self, tags: &[u64]) -> Self {
        tags.iter().fold(self, |s, &t| s.child(t))
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.id);
        rng
    }

    /// A single 64-bit seed for APIs that take one (e.g. pattern sampling).
    pub fn seed_u64(&self) -> u64 {
        splitmix64(self.master ^ splitmix64(self.id))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
