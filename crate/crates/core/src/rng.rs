//! Seed plumbing.
//!
//! Every random stream in the crate is a ChaCha8 generator. Child seeds are
//! derived from a parent seed and a stream index with the SplitMix64
//! finalizer, so a single root seed fixes every experiment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identity of the generator and seed derivation; stored in saved models.
pub const RNG_ID: &str = "chacha8/splitmix64";

pub type LabRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> LabRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `stream`-th child of `parent`.
pub fn derive_seed(parent: u64, stream: u64) -> u64 {
    splitmix64(parent ^ splitmix64(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Seed of a named child stream (FNV-1a of the tag).
pub fn derive_named(parent: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    derive_seed(parent, h)
}
