//! Deterministic sample generation.

use nalgebra::DVector;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default number of configuration samples per check.
pub const DEFAULT_SAMPLES: usize = 50;

/// `count` points of the box `bounds` from an Owen-scrambled Sobol sequence.
///
/// The same `(bounds, count, seed)` always yields the same points.
pub fn sobol_box(bounds: &[(f64, f64)], count: usize, seed: u32) -> Vec<DVector<f64>> {
    (0..count)
        .map(|i| {
            DVector::from_iterator(
                bounds.len(),
                bounds.iter().enumerate().map(|(d, &(lo, hi))| {
                    let u = sobol_burley::sample(i as u32, d as u32, seed) as f64;
                    lo + (hi - lo) * u
                }),
            )
        })
        .collect()
}

/// Seeded generator used for random tangent vectors and property sweeps.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A vector with independent entries uniform in `[-scale, scale]`.
pub fn uniform_vector<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| rng.random_range(-scale..=scale)))
}
