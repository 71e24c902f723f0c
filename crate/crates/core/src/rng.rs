//! Seeded random streams.
//!
//! Every run has one `u64` seed. Named child streams (`"env"`, `"agent-noise"`,
//! `"rff"`, `"buffer-sampling"`, `"init"`, ...) are derived from it by hashing the
//! stream name with FNV-1a, xoring it into the seed and passing the result through
//! one SplitMix64 round. The derived value seeds a ChaCha8 generator. The derivation
//! is part of the run manifest ([`RNG_ALGORITHM`]) and must not change between releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::Scalar;

pub type Rng = ChaCha8Rng;

pub const RNG_ALGORITHM: &str =
    "ChaCha8Rng(rand_chacha 0.9); child seed = splitmix64(seed ^ fnv1a64(name)); normals via rand_distr StandardNormal (ziggurat)";

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of the child stream `name` of `seed`.
pub fn child_seed(seed: u64, name: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(name.as_bytes()))
}

/// Generator for the child stream `name` of `seed`.
pub fn stream(seed: u64, name: &str) -> Rng {
    Rng::seed_from_u64(child_seed(seed, name))
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Draws a seed for a sub-generator (an episode reset, say) from `rng`.
pub fn next_seed(rng: &mut Rng) -> u64 {
    rand::RngCore::next_u64(rng)
}

pub fn normal<T: Scalar>(rng: &mut Rng) -> T {
    let x: f64 = StandardNormal.sample(rng);
    T::of(x)
}
