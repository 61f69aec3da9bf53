//! Hierarchical seed derivation (experiment → round → node).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A node in the seed tree. Children are derived by label and index, so two
/// different paths never share a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedTree(u64);

impl SeedTree {
    pub fn new(root: u64) -> Self {
        SeedTree(splitmix64(root))
    }

    pub fn child(&self, label: &str, index: u64) -> SeedTree {
        let mut h = self.0;
        for b in label.bytes() {
            h = splitmix64(h ^ u64::from(b));
        }
        SeedTree(splitmix64(h ^ splitmix64(index)))
    }

    pub fn value(&self) -> u64 {
        self.0
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
