//! Seeded random sources. Every random draw in the crate goes through here.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of the `index`-th independent job derived from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    master ^ index
}

/// Seed for a named stream (data, init, wrong IC, ...) so that streams do
/// not collide when they share a master seed.
pub fn stream_seed(master: u64, stream: &str) -> u64 {
    // FNV-1a over the label.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    master.wrapping_add(h)
}
