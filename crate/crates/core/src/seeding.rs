//! Stable seed derivation.
//!
//! Every random stream in the crate is a [`ChaCha8Rng`] whose seed is derived
//! from a root seed and a path of integer or string labels. Derivation is a
//! pure function, so sub-streams for a generation, an individual, or an
//! experiment run can be created in any order (and on any thread) without
//! changing the numbers they produce.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for every stochastic component.
pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `label` into `seed`. Not commutative: `mix(mix(s, a), b) != mix(mix(s, b), a)`.
pub fn mix(seed: u64, label: u64) -> u64 {
    splitmix64(seed ^ splitmix64(label.wrapping_add(GOLDEN.rotate_left(17))))
}

/// 64-bit FNV-1a, used to turn names into seed labels.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn mix_str(seed: u64, label: &str) -> u64 {
    mix(seed, fnv1a(label.as_bytes()))
}

/// Seed obtained by folding `path` into `seed`.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &l| mix(s, l))
}

pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive(seed, path))
}
