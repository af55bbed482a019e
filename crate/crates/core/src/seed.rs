//! Counter-based seed splitting.
//!
//! Every random stream in the crate is derived from one base seed plus a
//! stream tag and an index, so work items can run in any order (or in
//! parallel) and still draw the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn tag_hash(tag: &str) -> u64 {
    // FNV-1a
    tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derive the seed of stream `(tag, index)` from `base`.
pub fn derive(base: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ tag_hash(tag)).wrapping_add(splitmix64(index)))
}

pub fn rng(base: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, tag, index))
}
