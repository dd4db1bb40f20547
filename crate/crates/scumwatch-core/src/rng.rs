//! Seeded, reproducible random number generation.
//!
//! Every randomized stage of the pipeline takes an explicit generator so
//! that a run is fully determined by its seed. `ChaCha8` is used because its
//! stream is stable across platforms and releases, which keeps serialized
//! models and emitted CSVs byte-identical between runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the pipeline.
pub type DetRng = ChaCha8Rng;

/// Create a generator from a 64-bit seed. Same seed, same stream.
pub fn seeded(seed: u64) -> DetRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Create an independent generator for one item of a batch.
///
/// Parallel workers must not share a stream; deriving per-item seeds from
/// `(base_seed, index)` keeps results identical no matter how work is split.
pub fn derived(base_seed: u64, index: u64) -> DetRng {
    seeded(splitmix64(base_seed ^ splitmix64(index)))
}

/// SplitMix64 finalizer, used only to spread seed bits.
pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// One standard normal draw via Box-Muller.
pub fn sample_standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // u1 in (0, 1] so the log is finite.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
