//! Fixed-seed fixtures shared by the benchmarks.

use nalgebra::{DMatrix, DVector};

use compresslearn::{rng_from_seed, Distribution, Gaussian, LabeledSample};

/// `N(μ, σ²)` in one dimension.
pub fn gaussian_1d(mu: f64, sigma: f64) -> Distribution {
    Gaussian::new(DVector::from_element(1, mu), DMatrix::from_element(1, 1, sigma * sigma)).expect("valid parameters").into()
}

/// `n` draws from `dist` under a fixed seed.
pub fn sample(dist: &Distribution, n: usize, seed: u64) -> LabeledSample {
    dist.sample(n, &mut rng_from_seed(seed))
}
