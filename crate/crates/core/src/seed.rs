//! Seeded generator hierarchy.
//!
//! All randomness in the crate is routed through a [`SeedTree`]: a root seed
//! plus a label path deterministically derives every stream. Streams derived
//! for indexed work items (ensemble members, rollout candidates, sample rows)
//! are stateless per item, so parallel and sequential execution draw identical
//! numbers regardless of scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic seed derivation node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        SeedTree { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive a child node for a named stream.
    pub fn child(&self, label: &str) -> SeedTree {
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for b in label.as_bytes() {
            h = splitmix64(h ^ u64::from(*b));
        }
        SeedTree { seed: splitmix64(h) }
    }

    /// Derive a child node for an indexed work item.
    pub fn index(&self, i: u64) -> SeedTree {
        SeedTree {
            seed: splitmix64(self.seed ^ splitmix64(i.wrapping_add(0x51ed_270b))),
        }
    }

    /// Materialize the stream for this node.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
