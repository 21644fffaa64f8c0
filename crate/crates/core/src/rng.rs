//! Seeded random streams.
//!
//! Every component draws from ChaCha8, a counter-based generator: the run
//! seed fixes the key and a component id selects one of its 2^64 streams, so
//! components never share or perturb each other's sequences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type UqRng = ChaCha8Rng;

/// Stream ids for the components that consume randomness.
pub mod stream {
    pub const DATASET: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const LANGEVIN: u64 = 5;
    pub const LATENT: u64 = 6;
    pub const NOISE: u64 = 7;
    pub const EVAL: u64 = 8;
}

/// Generator for `(seed, component)`.
pub fn stream_rng(seed: u64, component: u64) -> UqRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(component);
    rng
}

/// Derives a child seed; used where a component spawns sub-components
/// (ensemble members, parallel chains) that need their own seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn normal(rng: &mut UqRng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_vec(rng: &mut UqRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}
