//! Divergences between Gaussians and Gaussian mixtures.
//!
//! KL and log-det divergence are closed form. Total variation is computed by adaptive
//! quadrature in one dimension and by Monte Carlo otherwise. The MC estimator draws
//! from `p` only and averages `(1 − q/p)₊`, which is unbiased for `∫(p − q)₊ = TV`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussmodels::{Distribution, Gaussian};
use crate::linalg::{self, MIN_EIGEN_RATIO};
use crate::rng::{derive_seed, rng_from_seed};

/// Default Monte-Carlo sample count for [`tv_mc`].
pub const DEFAULT_N_MC: usize = 200_000;

/// Number of independent RNG streams an MC estimate is split into. Fixed so the
/// result does not depend on the worker count.
const MC_CHUNKS: usize = 64;

/// Convergence tolerance of the adaptive Simpson rule, summed over all panels.
const QUAD_TOL: f64 = 1e-7;

/// Half-width, in standard deviations, of the window integrated around each component.
const QUAD_SIGMAS: i32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TvMethod {
    Quadrature1d,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TvEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_mc: usize,
    pub method: TvMethod,
}

impl TvEstimate {
    /// `value + k·std_error`.
    pub fn upper(&self, k: f64) -> f64 {
        self.value + k * self.std_error
    }

    /// `max(value − k·std_error, 0)`.
    pub fn lower(&self, k: f64) -> f64 {
        (self.value - k * self.std_error).max(0.0)
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    Ok(())
}

/// `KL(p ‖ q)` for full-rank Gaussians, through a Cholesky factorization of `Σ_q`:
///
/// `½(tr(Σ_q⁻¹Σ_p) − d + (μ_p−μ_q)ᵀΣ_q⁻¹(μ_p−μ_q) − log det(Σ_pΣ_q⁻¹))`
pub fn kl_gaussians(p: &Gaussian, q: &Gaussian) -> Result<f64> {
    check_dims(p.dim(), q.dim())?;
    let d = p.dim();
    let chol = q
        .cov()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: q.eigen().eigenvalues[0],
        })?;
    let l = chol.l();
    let log_det_q: f64 = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
    let trace = chol.solve(p.cov()).trace();
    let diff = p.mean() - q.mean();
    let maha = diff.dot(&chol.solve(&diff));
    Ok(0.5 * (trace - d as f64 + maha - p.log_det_cov() + log_det_q))
}

/// `KL(p ‖ q)` from the spectrum of the whitened covariance `Σ_q^{-1/2} Σ_p Σ_q^{-1/2}`:
/// `½(Σ(λᵢ − 1 − ln λᵢ) + ‖Σ_q^{-1/2}(μ_p − μ_q)‖²)`. An independent route to the
/// same quantity as [`kl_gaussians`].
pub fn kl_gaussians_spectral(p: &Gaussian, q: &Gaussian) -> Result<f64> {
    check_dims(p.dim(), q.dim())?;
    let w = q.inv_sqrt_cov();
    let ld = ld_from_whitened(&(w * p.cov() * w));
    let z = w * (p.mean() - q.mean());
    Ok(0.5 * (ld + z.norm_squared()))
}

fn ld_from_whitened(m: &DMatrix<f64>) -> f64 {
    let mut s = m.clone();
    let n = s.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    linalg::symmetric_eigen(&s)
        .eigenvalues
        .iter()
        .map(|&l| l - 1.0 - l.ln())
        .sum()
}

/// Log-det divergence `tr(B⁻¹A − I) − log det(B⁻¹A)`.
pub fn logdet_divergence(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    check_dims(a.nrows(), b.nrows())?;
    linalg::spd_eigen(a)?;
    let w = linalg::spd_eigen(b)?.map(|l| 1.0 / l.sqrt());
    Ok(ld_from_whitened(&(&w * linalg::symmetrize(a)? * &w)))
}

/// Squared Mahalanobis distance `(μ_p−μ_q)ᵀ Σ_q⁻¹ (μ_p−μ_q)`.
pub fn mahalanobis_sq(p: &Gaussian, q: &Gaussian) -> Result<f64> {
    check_dims(p.dim(), q.dim())?;
    let z = q.inv_sqrt_cov() * (p.mean() - q.mean());
    Ok(z.norm_squared())
}

/// Upper bound `TV ≤ ½√(LD(Σ_p, Σ_q) + (μ_p−μ_q)ᵀΣ_q⁻¹(μ_p−μ_q))`.
pub fn tv_upper_bound(p: &Gaussian, q: &Gaussian) -> Result<f64> {
    let ld = logdet_divergence(p.cov(), q.cov())?;
    Ok(0.5 * (ld + mahalanobis_sq(p, q)?).max(0.0).sqrt())
}

/// Divergences of a pair where exactly one covariance is singular.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SingularPair {
    /// Always `+∞`: the singular measure is not absolutely continuous w.r.t. the other.
    pub kl: f64,
    pub kl_infinite: bool,
    /// Always 1: a measure carried by a proper affine subspace and one with a Lebesgue
    /// density are mutually singular.
    pub tv: f64,
    /// Smallest eigenvalue of the singular covariance.
    pub min_eigenvalue: f64,
}

/// Analytic divergences for a pair in which one covariance is positive definite and the
/// other positive semidefinite but singular. Both-full-rank and both-singular pairs are
/// rejected; the first has [`kl_gaussians`], the second is unsupported.
pub fn singular_pair(cov_p: &DMatrix<f64>, cov_q: &DMatrix<f64>) -> Result<SingularPair> {
    check_dims(cov_p.nrows(), cov_q.nrows())?;
    let classify = |a: &DMatrix<f64>| -> Result<(bool, f64)> {
        let e = linalg::symmetric_eigen(&linalg::symmetrize(a)?);
        let max = e.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
        let min = e.eigenvalues[0];
        let tol = MIN_EIGEN_RATIO * max.max(f64::MIN_POSITIVE);
        if min < -tol {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        Ok((min <= tol, min))
    };
    let (sp, mp) = classify(cov_p)?;
    let (sq, mq) = classify(cov_q)?;
    match (sp, sq) {
        (true, false) | (false, true) => Ok(SingularPair {
            kl: f64::INFINITY,
            kl_infinite: true,
            tv: 1.0,
            min_eigenvalue: if sp { mp } else { mq },
        }),
        (false, false) => Err(Error::invalid("both covariances are full rank")),
        (true, true) => Err(Error::invalid("both covariances are singular")),
    }
}

/// TV between one-dimensional distributions by adaptive Simpson quadrature of `½|p − q|`.
///
/// The integration window is the union of `μ ± 10σ` over every component of both
/// arguments, broken into panels at every `μ + jσ`. Mass outside the window is below
/// `1e-22` and ignored.
pub fn tv_1d(p: &Distribution, q: &Distribution) -> Result<TvEstimate> {
    if p.dim() != 1 || q.dim() != 1 {
        return Err(Error::invalid("tv_1d needs one-dimensional distributions"));
    }
    check_dims(p.dim(), q.dim())?;
    let mut breaks = Vec::new();
    for dist in [p, q] {
        for (_, g) in dist.components() {
            let (mu, s) = (g.mean()[0], g.std_dev());
            for j in -QUAD_SIGMAS..=QUAD_SIGMAS {
                breaks.push(mu + j as f64 * s);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let f = |x: f64| (p.ln_pdf(&[x]).exp() - q.ln_pdf(&[x]).exp()).abs();
    let panels = breaks.len().saturating_sub(1).max(1);
    let tol = QUAD_TOL / panels as f64;
    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += adaptive_simpson(&f, w[0], w[1], tol);
    }
    Ok(TvEstimate {
        value: (0.5 * total).clamp(0.0, 1.0),
        std_error: 0.0,
        n_mc: 0,
        method: TvMethod::Quadrature1d,
    })
}

/// TV between one-dimensional Gaussians.
pub fn tv_1d_gaussians(p: &Gaussian, q: &Gaussian) -> Result<f64> {
    Ok(tv_1d(&p.clone().into(), &q.clone().into())?.value)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Monte-Carlo TV estimate `mean((1 − q(x)/p(x))₊)` over `x ~ p`.
///
/// The draws are split into a fixed number of independently seeded streams evaluated in
/// parallel and merged in stream order, so the value depends only on `(n_mc, seed)`.
pub fn tv_mc(p: &Distribution, q: &Distribution, n_mc: usize, seed: u64) -> Result<TvEstimate> {
    check_dims(p.dim(), q.dim())?;
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be positive"));
    }
    let chunks = MC_CHUNKS.min(n_mc);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let n = n_mc / chunks + usize::from(c < n_mc % chunks);
            let mut rng = rng_from_seed(derive_seed(seed, c as u64));
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let (x, _) = p.draw_labeled(&mut rng);
                let lp = p.ln_pdf(x.as_slice());
                let lq = q.ln_pdf(x.as_slice());
                let v = (1.0 - (lq - lp).exp()).max(0.0);
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = partial
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let n = n_mc as f64;
    let mean = s / n;
    let var = if n_mc > 1 {
        ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(TvEstimate {
        value: mean.clamp(0.0, 1.0),
        std_error: (var / n).sqrt(),
        n_mc,
        method: TvMethod::MonteCarlo,
    })
}

/// Quadrature in one dimension, Monte Carlo otherwise.
pub fn tv(p: &Distribution, q: &Distribution, n_mc: usize, seed: u64) -> Result<TvEstimate> {
    if p.dim() == 1 && q.dim() == 1 {
        tv_1d(p, q)
    } else {
        tv_mc(p, q, n_mc, seed)
    }
}

/// `‖Σ_a⁻¹Σ_b − I‖_F` for zero-mean Gaussians.
pub fn tv_frobenius_proxy(a: &Gaussian, b: &Gaussian) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    if a.mean().iter().chain(b.mean().iter()).any(|&m| m != 0.0) {
        return Err(Error::invalid("the Frobenius characterization needs zero means"));
    }
    Ok(frobenius_proxy_cov(a.inv_cov(), b.cov()))
}

/// `‖Σ_a⁻¹Σ_b − I‖_F` from `Σ_a⁻¹` and `Σ_b`.
pub fn frobenius_proxy_cov(inv_a: &DMatrix<f64>, cov_b: &DMatrix<f64>) -> f64 {
    let d = cov_b.nrows();
    linalg::frobenius(&(inv_a * cov_b - DMatrix::identity(d, d)))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PinskerReport {
    pub tv: TvEstimate,
    pub kl: f64,
    pub holds: bool,
}

/// Checks `2·(TV − 3·se)₊² ≤ KL + 1e-9` with TV from [`tv`].
pub fn pinsker_report(p: &Gaussian, q: &Gaussian, n_mc: usize, seed: u64) -> Result<PinskerReport> {
    let kl = kl_gaussians(p, q)?;
    let tv = tv(&p.clone().into(), &q.clone().into(), n_mc, seed)?;
    let lo = tv.lower(3.0);
    Ok(PinskerReport {
        tv,
        kl,
        holds: 2.0 * lo * lo <= kl + 1e-9,
    })
}

pub fn pinsker_check(p: &Gaussian, q: &Gaussian, n_mc: usize, seed: u64) -> Result<bool> {
    Ok(pinsker_report(p, q, n_mc, seed)?.holds)
}

/// `N(μ_p, Σ_p)` with `μ` shifted by `shift`; a small convenience for tests and benches.
pub fn shifted(g: &Gaussian, shift: &DVector<f64>) -> Result<Gaussian> {
    Gaussian::new(g.mean() + shift, g.cov().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussmodels::Mixture;
    use crate::rng::rng_from_seed;

    fn g1(mu: f64, s: f64) -> Gaussian {
        Gaussian::univariate(mu, s).unwrap()
    }

    #[test]
    fn kl_identical_is_zero() {
        let g = Gaussian::standard(3);
        assert!(kl_gaussians(&g, &g).unwrap().abs() < 1e-14);
    }

    #[test]
    fn kl_mean_shift() {
        for m in [0.1, 1.0, 3.0] {
            let v = kl_gaussians(&g1(0.0, 1.0), &g1(m, 1.0)).unwrap();
            assert!((v - m * m / 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn kl_correlated_fixture() {
        let eps = 0.3;
        // KL(N(0, Σ̂) ‖ N(0, I)): the trace term vanishes, leaving −½ log det Σ̂.
        let p = Gaussian::from_rows(vec![0.0, 0.0], &[vec![1.0, eps], vec![eps, 1.0]]).unwrap();
        let q = Gaussian::standard(2);
        let expected = -(1.0 - eps * eps).ln() / 2.0;
        assert!((kl_gaussians(&p, &q).unwrap() - expected).abs() < 1e-12);
        assert!((kl_gaussians_spectral(&p, &q).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn kl_routes_agree_and_are_nonnegative() {
        let mut rng = rng_from_seed(77);
        for d in 1..=5 {
            for _ in 0..20 {
                let p = Gaussian::new(DVector::from_fn(d, |_, _| rand::Rng::random::<f64>(&mut rng)), linalg::random_spd(d, 100.0, &mut rng)).unwrap();
                let q = Gaussian::new(DVector::zeros(d), linalg::random_spd(d, 100.0, &mut rng)).unwrap();
                let a = kl_gaussians(&p, &q).unwrap();
                let b = kl_gaussians_spectral(&p, &q).unwrap();
                assert!(a >= -1e-12);
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn logdet_fixtures() {
        let b = DMatrix::identity(3, 3);
        assert!(logdet_divergence(&b, &b).unwrap().abs() < 1e-14);
        let a = &b * 1.2;
        let expected = 3.0 * (0.2 - 1.2_f64.ln());
        assert!((logdet_divergence(&a, &b).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn logdet_conjugation_invariance() {
        let mut rng = rng_from_seed(4);
        for _ in 0..10 {
            let a = linalg::random_spd(4, 50.0, &mut rng);
            let b = linalg::random_spd(4, 50.0, &mut rng);
            let c = linalg::random_spd(4, 10.0, &mut rng);
            let l1 = logdet_divergence(&a, &b).unwrap();
            let l2 = logdet_divergence(&(&c * &a * &c), &(&c * &b * &c)).unwrap();
            assert!((l1 - l2).abs() < 1e-9 * l1.max(1.0));
        }
    }

    #[test]
    fn spectral_bound_on_logdet() {
        let mut rng = rng_from_seed(8);
        for alpha in [0.05, 0.2, 0.5] {
            for _ in 0..20 {
                let d = 4;
                let b = linalg::random_spd(d, 1e3, &mut rng);
                let half = linalg::sqrt_spd(&b).unwrap();
                let diag = DVector::from_fn(d, |_, _| alpha * (2.0 * rand::Rng::random::<f64>(&mut rng) - 1.0));
                let a = &half * (DMatrix::identity(d, d) + DMatrix::from_diagonal(&diag)) * &half;
                let a = linalg::symmetrize(&(0.5 * (&a + a.transpose()))).unwrap();
                assert!(logdet_divergence(&a, &b).unwrap() <= d as f64 * alpha * alpha + 1e-12);
            }
        }
    }

    #[test]
    fn quadrature_fixtures() {
        let same = tv_1d_gaussians(&g1(0.0, 1.0), &g1(0.0, 1.0)).unwrap();
        assert!(same.abs() < 1e-12);
        let far = tv_1d_gaussians(&g1(0.0, 1.0), &g1(10.0, 1.0)).unwrap();
        assert!((far - 1.0).abs() < 1e-6);
        // Closed form for equal variances: 2Φ(m/2) − 1.
        let v = tv_1d_gaussians(&g1(0.0, 1.0), &g1(1.0, 1.0)).unwrap();
        let exact = 2.0 * crate::gaussmodels::normal_cdf(0.5) - 1.0;
        assert!((v - exact).abs() < 1e-6, "{v} vs {exact}");
        // Parameter perturbation of relative size ε gives L1 ≤ 2ε.
        let eps = 0.2;
        let v = tv_1d_gaussians(&g1(0.0, 1.0), &g1(eps, 1.0 + eps)).unwrap();
        assert!(2.0 * v <= 2.0 * eps);
    }

    #[test]
    fn quadrature_handles_disparate_scales() {
        let v = tv_1d_gaussians(&g1(0.0, 1e-3), &g1(0.0, 1e3)).unwrap();
        assert!(v > 0.99 && v <= 1.0);
        let m: Distribution = Mixture::new(vec![0.5, 0.5], vec![g1(-5.0, 1.0), g1(5.0, 1.0)]).unwrap().into();
        let v = tv_1d(&m, &g1(-5.0, 1.0).into()).unwrap().value;
        assert!((v - 0.5).abs() < 1e-6);
    }

    #[test]
    fn mc_matches_quadrature_on_mean_shift() {
        let p: Distribution = Gaussian::standard(3).into();
        let q: Distribution = Gaussian::new(DVector::from_vec(vec![0.7, 0.0, 0.0]), DMatrix::identity(3, 3)).unwrap().into();
        let mc = tv_mc(&p, &q, DEFAULT_N_MC, 5).unwrap();
        let quad = tv_1d_gaussians(&g1(0.0, 1.0), &g1(0.7, 1.0)).unwrap();
        assert!((mc.value - quad).abs() <= 3.0 * mc.std_error, "{mc:?} vs {quad}");
        let zero = tv_mc(&p, &p, 10_000, 5).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn mc_is_seed_deterministic() {
        let p: Distribution = Gaussian::standard(2).into();
        let q: Distribution = Gaussian::new(DVector::from_vec(vec![0.3, 0.1]), DMatrix::identity(2, 2)).unwrap().into();
        let a = tv_mc(&p, &q, 12_345, 9).unwrap();
        let b = tv_mc(&p, &q, 12_345, 9).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn singular_fixture() {
        let eps = 0.1;
        let s = DMatrix::from_row_slice(2, 2, &[1.0, -(1.0 - eps), -(1.0 - eps), 1.0]);
        let s_hat = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert!(Gaussian::new(DVector::zeros(2), s_hat.clone()).is_err());
        let r = singular_pair(&s, &s_hat).unwrap();
        assert!(r.kl_infinite && r.kl.is_infinite());
        assert_eq!(r.tv, 1.0);
        assert!(singular_pair(&s, &s).is_err());
    }

    #[test]
    fn frobenius_proxy_fixtures() {
        let a = Gaussian::standard(4);
        assert!(tv_frobenius_proxy(&a, &a).unwrap() < 1e-14);
        let lam = 0.3;
        let b = Gaussian::new(DVector::zeros(4), DMatrix::identity(4, 4) * (1.0 + lam)).unwrap();
        assert!((tv_frobenius_proxy(&a, &b).unwrap() - 2.0 * lam).abs() < 1e-13);
        let shifted = Gaussian::new(DVector::from_element(4, 1.0), DMatrix::identity(4, 4)).unwrap();
        assert!(tv_frobenius_proxy(&a, &shifted).is_err());
    }

    #[test]
    fn pinsker_fixtures() {
        let a = g1(0.0, 1.0);
        assert!(pinsker_check(&a, &a, 1000, 1).unwrap());
        let r = pinsker_report(&a, &g1(1.0, 1.0), 1000, 1).unwrap();
        assert!((r.tv.value - 0.3829).abs() < 1e-4 && r.holds);
        assert!(tv_upper_bound(&a, &g1(1.0, 1.0)).unwrap() >= r.tv.value);
    }
}
