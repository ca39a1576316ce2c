//! Direct estimator for one Gaussian: sample mean of the first half, covariance from
//! differences of consecutive pairs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussmodels::Gaussian;

/// Constant `C` of the default sample size.
pub const EFFICIENT_C: f64 = 8.0;

/// `2m` with `m = ⌈C(d² + d·ln(1/δ))/ε²⌉`.
pub fn efficient_sample_size(d: usize, eps: f64, delta: f64, c: f64) -> usize {
    let d = d as f64;
    2 * (c * (d * d + d * (1.0 / delta).ln()) / (eps * eps)).ceil() as usize
}

/// `μ̂ = (1/m) Σᵢ₌₁..m vᵢ`, `Σ̂ = (1/2m) Σᵢ₌₁..m (v₂ᵢ − v₂ᵢ₋₁)(v₂ᵢ − v₂ᵢ₋₁)ᵀ` for a sample
/// `v₁ … v₂ₘ`.
pub fn learn_gaussian_efficient(points: &[DVector<f64>], d: usize) -> Result<Gaussian> {
    let n = points.len();
    if n % 2 != 0 {
        return Err(Error::invalid(format!("sample size {n} must be even")));
    }
    if n < 2 * (d + 1) {
        return Err(Error::SampleTooShort {
            needed: 2 * (d + 1),
            got: n,
        });
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }
    let m = n / 2;
    let mut mu = DVector::zeros(d);
    for p in &points[..m] {
        mu += p;
    }
    mu /= m as f64;
    let mut cov = DMatrix::zeros(d, d);
    for pair in points.chunks_exact(2) {
        let diff = &pair[1] - &pair[0];
        cov += &diff * diff.transpose();
    }
    cov /= (2 * m) as f64;
    Gaussian::new(mu, cov)
}
