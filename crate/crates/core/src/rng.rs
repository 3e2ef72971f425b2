//! Reproducible random streams.
//!
//! Every simulated path owns a ChaCha8 generator. ChaCha is a counter-based
//! generator: its state is a 256-bit key plus a 64-bit block counter, and
//! block `n` of output is `ChaCha8(key, n)`. The key of path `i` under master
//! seed `s` is expanded from [`stream_seed`]`(s, i)`, so the random numbers a
//! path consumes depend only on `(s, i)` and never on which worker thread ran
//! it or in which order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

/// SplitMix64 finalizer (Steele, Lea & Flood): a bijective 64-bit mixer.
///
/// ```text
/// z = x + 0x9E3779B97F4A7C15
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// return z ^ (z >> 31)
/// ```
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `index` under `master`: `splitmix64(master ^ splitmix64(index))`.
pub fn stream_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

pub fn path_rng(seed: u64) -> PathRng {
    PathRng::seed_from_u64(seed)
}

/// Uniform draw on the open interval `(0, 1)`.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Exponential draw with the given rate, by inversion `-ln(U)/rate`.
pub fn exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -open_unit(rng).ln() / rate
}

/// Pair of independent standard normals by the Marsaglia polar method:
/// draw `(u, v)` uniform on `[-1, 1]²` until `0 < s = u² + v² < 1`, then
/// return `(u, v)·√(-2 ln s / s)`.
pub fn standard_normal_pair<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    loop {
        let u: f64 = 2.0 * rng.random::<f64>() - 1.0;
        let v: f64 = 2.0 * rng.random::<f64>() - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            let f = (-2.0 * s.ln() / s).sqrt();
            return (u * f, v * f);
        }
    }
}

/// Fills `out` with independent standard normals.
pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (a, b) = standard_normal_pair(rng);
        pair[0] = a;
        pair[1] = b;
    }
    if let [last] = chunks.into_remainder() {
        *last = standard_normal_pair(rng).0;
    }
}
