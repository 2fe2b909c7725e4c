//! Per-trajectory random streams.
//!
//! Stream `i` of master seed `s` is ChaCha8 keyed by `s` with stream id `i`: a
//! counter-based derivation, so trajectory `i` sees the same noise whichever
//! worker runs it and in whatever order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Wiener increment N(0, dt).
#[inline]
pub fn wiener_increment(rng: &mut StreamRng, sqrt_dt: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sqrt_dt
}

#[inline]
pub fn standard_normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform on [0, 1).
#[inline]
pub fn uniform(rng: &mut StreamRng) -> f64 {
    rand_distr::StandardUniform.sample(rng)
}
