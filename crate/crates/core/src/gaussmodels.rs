//! Gaussian and Gaussian-mixture distributions: construction, exact log-densities,
//! sampling and the JSON schema used by the CLI.
//!
//! A [`Gaussian`] caches everything derived from its covariance at construction time
//! (the SPD square root Ψ, its inverse, Σ⁻¹ and log det Σ), so density evaluation and
//! sampling are allocation-free matrix-vector products. Sampling uses `μ + Ψz` with the
//! symmetric square root rather than a Cholesky factor; the encoders reuse the same Ψ.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SpdEigen};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Tolerance on `|Σ w − 1|` for mixture weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    sqrt_cov: DMatrix<f64>,
    inv_sqrt_cov: DMatrix<f64>,
    inv_cov: DMatrix<f64>,
    log_det_cov: f64,
    eigen: SpdEigen,
    // Row-major copies of Ψ⁻¹ and Ψ for the hot loops.
    whiten: Vec<f64>,
    color: Vec<f64>,
    log_norm: f64,
}

impl Gaussian {
    /// Builds `N(mean, cov)`. The covariance is symmetrized after a relative asymmetry
    /// check and rejected unless its smallest eigenvalue exceeds `1e-12·‖cov‖₂`.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::invalid("zero-dimensional Gaussian"));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: cov.nrows(),
            });
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("mean"));
        }
        let cov = linalg::symmetrize(&cov)?;
        let eigen = linalg::spd_eigen(&cov)?;
        let sqrt_cov = eigen.map(f64::sqrt);
        let inv_sqrt_cov = eigen.map(|l| 1.0 / l.sqrt());
        let inv_cov = eigen.map(|l| 1.0 / l);
        let log_det_cov = eigen.log_det();
        let whiten = row_major(&inv_sqrt_cov);
        let color = row_major(&sqrt_cov);
        let log_norm = -0.5 * log_det_cov - 0.5 * d as f64 * LN_2PI;
        Ok(Self {
            mean,
            cov,
            sqrt_cov,
            inv_sqrt_cov,
            inv_cov,
            log_det_cov,
            eigen,
            whiten,
            color,
            log_norm,
        })
    }

    pub fn univariate(mean: f64, std_dev: f64) -> Result<Self> {
        if !(std_dev.is_finite() && std_dev != 0.0) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: std_dev * std_dev,
            });
        }
        Self::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, std_dev * std_dev),
        )
    }

    pub fn standard(d: usize) -> Self {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d)).expect("identity is SPD")
    }

    pub fn from_rows(mean: Vec<f64>, cov: &[Vec<f64>]) -> Result<Self> {
        Self::new(DVector::from_vec(mean), linalg::matrix_from_rows(cov)?)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Ψ = Σ^{1/2}.
    pub fn sqrt_cov(&self) -> &DMatrix<f64> {
        &self.sqrt_cov
    }

    /// Ψ⁻¹.
    pub fn inv_sqrt_cov(&self) -> &DMatrix<f64> {
        &self.inv_sqrt_cov
    }

    pub fn inv_cov(&self) -> &DMatrix<f64> {
        &self.inv_cov
    }

    pub fn log_det_cov(&self) -> f64 {
        self.log_det_cov
    }

    /// Eigendecomposition of Σ, eigenvalues ascending.
    pub fn eigen(&self) -> &SpdEigen {
        &self.eigen
    }

    /// Standard deviation of a one-dimensional Gaussian.
    pub fn std_dev(&self) -> f64 {
        self.cov[(0, 0)].sqrt()
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.cov[(i, j)] == 0.0))
    }

    /// Log-density at a point given as a slice. Panics in debug builds on a length mismatch.
    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        let mut quad = 0.0;
        for i in 0..d {
            let row = &self.whiten[i * d..(i + 1) * d];
            let mut z = 0.0;
            for j in 0..d {
                z += row[j] * (x[j] - self.mean[j]);
            }
            quad += z * z;
        }
        self.log_norm - 0.5 * quad
    }

    /// Mahalanobis norm `‖Ψ⁻¹(x − μ)‖`.
    pub fn whitened_norm(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut quad = 0.0;
        for i in 0..d {
            let row = &self.whiten[i * d..(i + 1) * d];
            let z: f64 = (0..d).map(|j| row[j] * (x[j] - self.mean[j])).sum();
            quad += z * z;
        }
        quad.sqrt()
    }

    /// One draw `μ + Ψz`, `z ~ N(0, I)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        DVector::from_fn(d, |i, _| {
            let row = &self.color[i * d..(i + 1) * d];
            self.mean[i] + row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()
        })
    }

    /// CDF of a one-dimensional Gaussian.
    pub fn cdf_1d(&self, x: f64) -> f64 {
        normal_cdf((x - self.mean[0]) / self.std_dev())
    }
}

fn row_major(a: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.nrows() * a.ncols());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out.push(a[(i, j)]);
        }
    }
    out
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

#[derive(Clone, Debug)]
pub struct Mixture {
    weights: Vec<f64>,
    components: Vec<Gaussian>,
    ln_weights: Vec<f64>,
}

impl Mixture {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidMixture("no components".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::InvalidMixture(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidMixture(format!("weight {w} is not a nonnegative number")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMixture(format!("weights sum to {total}")));
        }
        let d = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: c.dim(),
            });
        }
        let ln_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            components,
            ln_weights,
        })
    }

    /// Normalizes nonnegative weights before construction.
    pub fn normalized(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidMixture(format!("weights sum to {total}")));
        }
        let mut w: Vec<f64> = weights.iter().map(|x| x / total).collect();
        // Absorb the rounding residue so the sum is 1 to within an ulp or two.
        let residue = 1.0 - w.iter().sum::<f64>();
        if let Some(max) = w.iter_mut().max_by(|a, b| a.total_cmp(b)) {
            *max += residue;
        }
        Self::new(w, components)
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        let mut terms = [0.0_f64; 16];
        let mut heap;
        let buf: &mut [f64] = if self.k() <= terms.len() {
            &mut terms[..self.k()]
        } else {
            heap = vec![0.0; self.k()];
            &mut heap
        };
        for (slot, (lw, c)) in buf.iter_mut().zip(self.ln_weights.iter().zip(&self.components)) {
            *slot = if lw.is_finite() { lw + c.ln_pdf(x) } else { f64::NEG_INFINITY };
        }
        log_sum_exp(buf)
    }

    pub fn cdf_1d(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.cdf_1d(x))
            .sum()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Either a single Gaussian or a finite Gaussian mixture.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
#[allow(clippy::large_enum_variant)]
pub enum Distribution {
    Gaussian(Gaussian),
    Mixture(Mixture),
}

impl From<Gaussian> for Distribution {
    fn from(g: Gaussian) -> Self {
        Distribution::Gaussian(g)
    }
}

impl From<Mixture> for Distribution {
    fn from(m: Mixture) -> Self {
        Distribution::Mixture(m)
    }
}

impl Distribution {
    pub fn dim(&self) -> usize {
        match self {
            Distribution::Gaussian(g) => g.dim(),
            Distribution::Mixture(m) => m.dim(),
        }
    }

    pub fn as_gaussian(&self) -> Option<&Gaussian> {
        match self {
            Distribution::Gaussian(g) => Some(g),
            Distribution::Mixture(_) => None,
        }
    }

    pub fn as_mixture(&self) -> Option<&Mixture> {
        match self {
            Distribution::Mixture(m) => Some(m),
            Distribution::Gaussian(_) => None,
        }
    }

    /// `(weight, component)` pairs; a Gaussian is a one-component mixture.
    pub fn components(&self) -> Vec<(f64, &Gaussian)> {
        match self {
            Distribution::Gaussian(g) => vec![(1.0, g)],
            Distribution::Mixture(m) => m.weights.iter().copied().zip(m.components.iter()).collect(),
        }
    }

    /// Log-density without a dimension check; see [`Distribution::log_density`].
    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        match self {
            Distribution::Gaussian(g) => g.ln_pdf(x),
            Distribution::Mixture(m) => m.ln_pdf(x),
        }
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.ln_pdf(x.as_slice()))
    }

    pub fn cdf_1d(&self, x: f64) -> f64 {
        match self {
            Distribution::Gaussian(g) => g.cdf_1d(x),
            Distribution::Mixture(m) => m.cdf_1d(x),
        }
    }

    /// One draw and the index of the component it came from.
    pub fn draw_labeled<R: Rng + ?Sized>(&self, rng: &mut R) -> (DVector<f64>, usize) {
        match self {
            Distribution::Gaussian(g) => (g.draw(rng), 0),
            Distribution::Mixture(m) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut label = m.k() - 1;
                for (i, w) in m.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        label = i;
                        break;
                    }
                }
                (m.components[label].draw(rng), label)
            }
        }
    }

    /// `n` i.i.d. draws. Mixture draws record the generating component in `labels`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> LabeledSample {
        let mut points = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let (x, l) = self.draw_labeled(rng);
            points.push(x);
            labels.push(l);
        }
        match self {
            Distribution::Gaussian(_) => LabeledSample::unlabeled(points),
            Distribution::Mixture(_) => LabeledSample {
                points,
                labels: Some(labels),
            },
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("distribution serializes")
    }
}

/// Free-function form of [`Distribution::sample`].
pub fn sample<R: Rng + ?Sized>(dist: &Distribution, n: usize, rng: &mut R) -> LabeledSample {
    dist.sample(n, rng)
}

/// Free-function form of [`Distribution::log_density`].
pub fn log_density(dist: &Distribution, x: &DVector<f64>) -> Result<f64> {
    dist.log_density(x)
}

/// A sequence of points, optionally tagged with the mixture component that generated each.
#[derive(Clone, Debug, Default)]
pub struct LabeledSample {
    pub points: Vec<DVector<f64>>,
    pub labels: Option<Vec<usize>>,
}

impl LabeledSample {
    pub fn unlabeled(points: Vec<DVector<f64>>) -> Self {
        Self { points, labels: None }
    }

    /// Checks `labels.len() == points.len()` and every label `< k`.
    pub fn with_labels(points: Vec<DVector<f64>>, labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.len() != points.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(format!("label {l} out of range for k = {k}")));
        }
        Ok(Self {
            points,
            labels: Some(labels),
        })
    }

    pub fn from_scalars(xs: &[f64]) -> Self {
        Self::unlabeled(xs.iter().map(|&x| DVector::from_element(1, x)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(|p| p.len())
    }

    /// Splits into `[0, at)` and `[at, len)`.
    pub fn split_at(&self, at: usize) -> (LabeledSample, LabeledSample) {
        let at = at.min(self.len());
        let (a, b) = self.points.split_at(at);
        let (la, lb) = match &self.labels {
            Some(l) => {
                let (x, y) = l.split_at(at);
                (Some(x.to_vec()), Some(y.to_vec()))
            }
            None => (None, None),
        };
        (
            LabeledSample {
                points: a.to_vec(),
                labels: la,
            },
            LabeledSample {
                points: b.to_vec(),
                labels: lb,
            },
        )
    }

    /// The `i`-th coordinate of every point, as one-dimensional points.
    pub fn marginal(&self, i: usize) -> Vec<DVector<f64>> {
        self.points.iter().map(|p| DVector::from_element(1, p[i])).collect()
    }

    /// Indices of points carrying `label`.
    pub fn indices_with_label(&self, label: usize) -> Vec<usize> {
        match &self.labels {
            Some(l) => l.iter().enumerate().filter(|(_, &x)| x == label).map(|(i, _)| i).collect(),
            None => Vec::new(),
        }
    }

    pub fn mean(&self) -> Option<DVector<f64>> {
        let d = self.dim()?;
        let mut acc = DVector::zeros(d);
        for p in &self.points {
            acc += p;
        }
        Some(acc / self.len() as f64)
    }

    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        let mean = self.mean()?;
        let d = mean.len();
        let mut acc = DMatrix::zeros(d, d);
        for p in &self.points {
            let c = p - &mean;
            acc += &c * c.transpose();
        }
        Some(acc / self.len() as f64)
    }
}

/// On-disk JSON form of a distribution.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistributionSpec {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<DistributionSpec>,
    },
}

impl TryFrom<DistributionSpec> for Distribution {
    type Error = Error;

    fn try_from(spec: DistributionSpec) -> Result<Self> {
        match spec {
            DistributionSpec::Gaussian { mean, cov } => Ok(Gaussian::from_rows(mean, &cov)?.into()),
            DistributionSpec::Mixture {
                weights,
                components,
            } => {
                let comps = components
                    .into_iter()
                    .map(|c| match c {
                        DistributionSpec::Gaussian { mean, cov } => Gaussian::from_rows(mean, &cov),
                        DistributionSpec::Mixture { .. } => {
                            Err(Error::InvalidMixture("nested mixtures are not supported".into()))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Mixture::new(weights, comps)?.into())
            }
        }
    }
}

impl From<&Gaussian> for DistributionSpec {
    fn from(g: &Gaussian) -> Self {
        DistributionSpec::Gaussian {
            mean: g.mean.iter().copied().collect(),
            cov: linalg::matrix_to_rows(&g.cov),
        }
    }
}

impl From<Distribution> for DistributionSpec {
    fn from(d: Distribution) -> Self {
        match &d {
            Distribution::Gaussian(g) => g.into(),
            Distribution::Mixture(m) => DistributionSpec::Mixture {
                weights: m.weights.clone(),
                components: m.components.iter().map(Into::into).collect(),
            },
        }
    }
}
