//! Seed handling. Every random draw in the crate flows from a [`RandomSeed`]
//! through named sub-streams, so adding a consumer never shifts another
//! consumer's stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// 64-bit master seed. Equal seeds give bit-identical streams.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct RandomSeed(pub u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// FNV-1a; stable across platforms and toolchains, unlike std's hasher.
fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

impl RandomSeed {
    /// Named sub-stream, e.g. `seed.derive("data", replication)`.
    pub fn derive(self, name: &str, index: u64) -> RandomSeed {
        let a = splitmix64(self.0 ^ fnv1a(name));
        RandomSeed(splitmix64(a ^ splitmix64(index.wrapping_add(0x51_7C_C1B7))))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for RandomSeed {
    fn from(v: u64) -> Self {
        RandomSeed(v)
    }
}
