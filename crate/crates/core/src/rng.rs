//! Seeded random streams.
//!
//! Every consumer draws from its own ChaCha stream derived from a single
//! top-level seed by [`derive_seed`]: the seed is combined with an FNV-1a hash
//! of the consumer name and then with the worker index, each step passed
//! through the SplitMix64 finalizer. Adding a consumer or a worker never
//! shifts another consumer's stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Vector;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed of the stream used by `module` on worker `worker`.
pub fn derive_seed(seed: u64, module: &str, worker: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(module)) ^ worker)
}

/// Stream for `(seed, module, worker)`.
pub fn stream(seed: u64, module: &str, worker: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, module, worker))
}

/// Standard Gaussian vector of length `n`.
pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Uniform draw from the open Euclidean ball `B_m(0, r)`.
pub fn uniform_ball<R: Rng + ?Sized>(rng: &mut R, m: usize, r: f64) -> Vector {
    loop {
        let g = gaussian_vector(rng, m);
        let norm = g.norm();
        if norm > 0.0 {
            let u: f64 = rng.random();
            let radius = r * u.powf(1.0 / m as f64);
            return g * (radius / norm);
        }
    }
}
