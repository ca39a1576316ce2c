//! Lower-bound instances: Gaussians whose covariances are spiked along random
//! `d/r`-dimensional subspaces, codebooks over a family of them, and the Fano arithmetic.
//!
//! With `Σₐ = I + λUₐUₐᵀ` every covariance has the same spectrum, so pairwise KL is
//! governed by the subspace overlap `‖UₐᵀU_b‖²_F` alone. Random subspaces overlap little,
//! which keeps every pair KL-close while the Frobenius gap keeps them TV-separated.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussmodels::{Gaussian, Mixture};
use crate::linalg::{matrix_to_rows, random_orthogonal};
use crate::rng::{derive_seed, rng_from_seed};

/// Retry rounds in [`make_lb_family`].
pub const LB_MAX_ROUNDS: usize = 100;

/// Largest codebook [`make_codebook`] builds.
pub const CODEBOOK_CAP: usize = 4096;

/// Consecutive rejected draws after which [`make_codebook`] stops.
pub const CODEBOOK_PATIENCE: usize = 20_000;

/// Alphabet size used by [`make_mixture_lb_family`].
pub const MIXTURE_ALPHABET: usize = 4;

/// First `cols` columns of a Haar-distributed orthogonal matrix.
pub fn random_orthonormal(d: usize, cols: usize, seed: u64) -> Result<DMatrix<f64>> {
    if cols > d || d == 0 {
        return Err(Error::invalid(format!("cannot draw {cols} orthonormal columns in dimension {d}")));
    }
    let q = random_orthogonal(d, &mut rng_from_seed(seed));
    Ok(q.columns(0, cols).into_owned())
}

/// `‖AᵀB‖²_F`.
pub fn cross_frobenius_sq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a.transpose() * b).norm_squared()
}

#[derive(Clone, Debug)]
pub struct LowerBoundFamily {
    pub d: usize,
    pub r: usize,
    pub lambda: f64,
    pub u: Vec<DMatrix<f64>>,
    /// `Σₐ = I + λUₐUₐᵀ`.
    pub sigmas: Vec<DMatrix<f64>>,
    /// Construction rounds used; 1 means the first draw passed.
    pub rounds: usize,
}

/// Pairs violating `‖UₐᵀU_b‖²_F ≤ d/2r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrobeniusCheck {
    pub bound: f64,
    pub max_cross: f64,
    pub violations: usize,
}

impl FrobeniusCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Maximum deviations from the structural identities of a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyInvariants {
    /// `max ‖UₐᵀUₐ − I‖_max`.
    pub orthonormality: f64,
    /// `max ‖Σₐ⁻¹ − (I − λ/(1+λ)·UₐUₐᵀ)‖_max`, with `Σₐ⁻¹` from a Cholesky solve.
    pub inverse_identity: f64,
    /// Largest gap between the sorted spectrum and `{1, 1+λ}` with multiplicities.
    pub spectrum: f64,
    /// `max |log det Σₐ − log det Σ_b|`.
    pub log_det_spread: f64,
}

impl LowerBoundFamily {
    /// Validates `d`, `r` and `λ` and builds the covariances from given bases.
    pub fn from_parts(d: usize, r: usize, lambda: f64, u: Vec<DMatrix<f64>>) -> Result<Self> {
        check_shape(d, r, lambda)?;
        if let Some(m) = u.iter().find(|m| m.nrows() != d || m.ncols() != d / r) {
            return Err(Error::invalid(format!(
                "basis of shape {}×{}, expected {d}×{}",
                m.nrows(),
                m.ncols(),
                d / r
            )));
        }
        let sigmas = u
            .iter()
            .map(|ua| DMatrix::identity(d, d) + ua * ua.transpose() * lambda)
            .collect();
        Ok(Self {
            d,
            r,
            lambda,
            u,
            sigmas,
            rounds: 1,
        })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Subspace dimension `d/r`.
    pub fn cols(&self) -> usize {
        self.d / self.r
    }

    pub fn gaussian(&self, a: usize) -> Result<Gaussian> {
        Gaussian::new(DVector::zeros(self.d), self.sigmas[a].clone())
    }

    pub fn frobenius_check(&self) -> FrobeniusCheck {
        frobenius_check(&self.u, self.d, self.r)
    }

    /// `λ²d / (2(1+λ)r)`, the bound on every pairwise KL.
    pub fn kl_bound(&self) -> f64 {
        let l = self.lambda;
        l * l * self.d as f64 / (2.0 * (1.0 + l) * self.r as f64)
    }

    /// `λ√(d/r)/2`, the bound below every pairwise Frobenius gap.
    pub fn frobenius_lower(&self) -> f64 {
        self.lambda * (self.d as f64 / self.r as f64).sqrt() / 2.0
    }

    pub fn invariants(&self) -> Result<FamilyInvariants> {
        let (d, l, c) = (self.d, self.lambda, self.cols());
        let mut out = FamilyInvariants {
            orthonormality: 0.0,
            inverse_identity: 0.0,
            spectrum: 0.0,
            log_det_spread: 0.0,
        };
        let mut log_dets = Vec::with_capacity(self.len());
        for (ua, sa) in self.u.iter().zip(&self.sigmas) {
            let gram = ua.transpose() * ua - DMatrix::<f64>::identity(c, c);
            out.orthonormality = out.orthonormality.max(gram.amax());
            let inv = sa
                .clone()
                .cholesky()
                .ok_or(Error::NotPositiveDefinite { min_eigenvalue: f64::NAN })?
                .inverse();
            let closed = DMatrix::identity(d, d) - ua * ua.transpose() * (l / (1.0 + l));
            out.inverse_identity = out.inverse_identity.max((inv - closed).amax());
            let mut ev: Vec<f64> = sa.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            for (i, e) in ev.iter().enumerate() {
                let want = if i < d - c { 1.0 } else { 1.0 + l };
                out.spectrum = out.spectrum.max((e - want).abs());
            }
            log_dets.push(ev.iter().map(|e| e.ln()).sum::<f64>());
        }
        let lo = log_dets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = log_dets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.log_det_spread = if log_dets.is_empty() { 0.0 } else { hi - lo };
        Ok(out)
    }

    /// Serializable form: bases and covariances as row lists.
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "d": self.d,
            "r": self.r,
            "lambda": self.lambda,
            "rounds": self.rounds,
            "u": self.u.iter().map(matrix_to_rows).collect::<Vec<_>>(),
            "sigmas": self.sigmas.iter().map(matrix_to_rows).collect::<Vec<_>>(),
        })
    }
}

fn check_shape(d: usize, r: usize, lambda: f64) -> Result<()> {
    if r < 9 {
        return Err(Error::invalid(format!("subspace ratio r = {r} must be at least 9")));
    }
    if d == 0 || d % r != 0 {
        return Err(Error::invalid(format!("d = {d} must be a positive multiple of r = {r}")));
    }
    if !(lambda > 0.0 && lambda <= 0.25) {
        return Err(Error::invalid(format!("λ = {lambda} must lie in (0, 1/4]")));
    }
    Ok(())
}

pub fn frobenius_check(u: &[DMatrix<f64>], d: usize, r: usize) -> FrobeniusCheck {
    let bound = d as f64 / (2.0 * r as f64);
    let crosses: Vec<f64> = (0..u.len())
        .into_par_iter()
        .flat_map_iter(|a| (a + 1..u.len()).map(move |b| (a, b)))
        .map(|(a, b)| cross_frobenius_sq(&u[a], &u[b]))
        .collect();
    FrobeniusCheck {
        bound,
        max_cross: crosses.iter().copied().fold(0.0, f64::max),
        violations: crosses.iter().filter(|&&c| c > bound).count(),
    }
}

/// `λ = ε/√d`.
pub fn make_lb_family(d: usize, r: usize, eps: f64, m: usize, seed: u64) -> Result<LowerBoundFamily> {
    make_lb_family_with(d, r, eps, m, seed, 1.0)
}

/// As [`make_lb_family`] with `λ = c_λ·ε/√d`.
pub fn make_lb_family_with(d: usize, r: usize, eps: f64, m: usize, seed: u64, c_lambda: f64) -> Result<LowerBoundFamily> {
    let lambda = c_lambda * eps / (d as f64).sqrt();
    check_shape(d, r, lambda)?;
    if m == 0 {
        return Err(Error::invalid("family size must be at least 1"));
    }
    let mut last = 0;
    for round in 0..LB_MAX_ROUNDS {
        let rs = derive_seed(seed, round as u64);
        let u = (0..m)
            .map(|a| random_orthonormal(d, d / r, derive_seed(rs, a as u64)))
            .collect::<Result<Vec<_>>>()?;
        let check = frobenius_check(&u, d, r);
        if check.passed() {
            let mut fam = LowerBoundFamily::from_parts(d, r, lambda, u)?;
            fam.rounds = round + 1;
            return Ok(fam);
        }
        last = check.violations;
    }
    Err(Error::Construction(format!(
        "{last} pairs still violate the overlap bound after {LB_MAX_ROUNDS} rounds"
    )))
}

/// `KL(N(0, Σₐ) ‖ N(0, Σ_b))` in closed form.
pub fn kl_pair(fam: &LowerBoundFamily, a: usize, b: usize) -> f64 {
    let l = fam.lambda;
    let c = fam.cols() as f64;
    let cross = cross_frobenius_sq(&fam.u[a], &fam.u[b]);
    0.5 * (l * c - l / (1.0 + l) * c - l * l / (1.0 + l) * cross)
}

/// `‖Σₐ⁻¹Σ_b − I‖_F`, checked against `λ√(d/r)/2` for `a ≠ b`.
pub fn tv_pair_lower(fam: &LowerBoundFamily, a: usize, b: usize) -> Result<f64> {
    if fam.lambda > 0.25 {
        return Err(Error::invalid("λ must be at most 1/4"));
    }
    let proxy = frobenius_gap(fam, a, b);
    if a != b && proxy < fam.frobenius_lower() {
        return Err(Error::BoundViolated(format!(
            "pair ({a}, {b}): ‖Σₐ⁻¹Σ_b − I‖_F = {proxy} < {}",
            fam.frobenius_lower()
        )));
    }
    Ok(proxy)
}

fn frobenius_gap(fam: &LowerBoundFamily, a: usize, b: usize) -> f64 {
    let l = fam.lambda;
    let ua = &fam.u[a];
    let inv_a = DMatrix::identity(fam.d, fam.d) - ua * ua.transpose() * (l / (1.0 + l));
    (inv_a * &fam.sigmas[b] - DMatrix::<f64>::identity(fam.d, fam.d)).norm()
}

/// All pairwise closed-form KL values.
pub fn pairwise_kl(fam: &LowerBoundFamily) -> DMatrix<f64> {
    pairwise(fam, kl_pair)
}

/// All pairwise `‖Σₐ⁻¹Σ_b − I‖_F` values, without the bound check.
pub fn pairwise_frobenius(fam: &LowerBoundFamily) -> DMatrix<f64> {
    pairwise(fam, frobenius_gap)
}

fn pairwise(fam: &LowerBoundFamily, f: impl Fn(&LowerBoundFamily, usize, usize) -> f64 + Sync) -> DMatrix<f64> {
    let m = fam.len();
    let vals: Vec<f64> = (0..m * m).into_par_iter().map(|i| f(fam, i / m, i % m)).collect();
    DMatrix::from_row_slice(m, m, &vals)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codebook {
    pub alphabet: usize,
    pub length: usize,
    pub words: Vec<Vec<u16>>,
}

pub fn hamming(a: &[u16], b: &[u16]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

impl Codebook {
    /// `⌈k/4⌉`.
    pub fn min_required(&self) -> usize {
        self.length.div_ceil(4)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Adds `word` if it is far enough from every word already present.
    pub fn try_insert(&mut self, word: Vec<u16>) -> bool {
        let need = self.min_required();
        if word.len() != self.length || word.iter().any(|&s| s as usize >= self.alphabet) {
            return false;
        }
        if self.words.iter().any(|w| hamming(w, &word) < need) {
            return false;
        }
        self.words.push(word);
        true
    }

    /// Minimum pairwise Hamming distance over all pairs, or `None` below two words.
    pub fn min_distance(&self) -> Option<usize> {
        let n = self.words.len();
        (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .map(|(a, b)| hamming(&self.words[a], &self.words[b]))
            .min()
    }
}

/// `T^{k/8}`, the size the packing argument guarantees.
pub fn packing_size(alphabet: usize, length: usize) -> f64 {
    (alphabet as f64).powf(length as f64 / 8.0)
}

/// Greedy random code over `[T]^k` with pairwise Hamming distance at least `⌈k/4⌉`,
/// grown to [`CODEBOOK_CAP`] words or until [`CODEBOOK_PATIENCE`] consecutive rejects.
pub fn make_codebook(alphabet: usize, length: usize, seed: u64) -> Result<Codebook> {
    make_codebook_with(alphabet, length, seed, CODEBOOK_CAP, CODEBOOK_PATIENCE)
}

pub fn make_codebook_with(alphabet: usize, length: usize, seed: u64, cap: usize, patience: usize) -> Result<Codebook> {
    if alphabet < 4 || alphabet > u16::MAX as usize {
        return Err(Error::invalid(format!("alphabet size {alphabet} must be in [4, 65535]")));
    }
    if length == 0 {
        return Err(Error::invalid("codeword length must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let mut book = Codebook {
        alphabet,
        length,
        words: Vec::new(),
    };
    let mut misses = 0;
    while book.len() < cap && misses < patience {
        let w: Vec<u16> = (0..length).map(|_| rng.random_range(0..alphabet as u16)).collect();
        if book.try_insert(w) {
            misses = 0;
        } else {
            misses += 1;
        }
    }
    if book.len() < 2 {
        return Err(Error::Construction(format!(
            "only {} codewords within patience {patience}",
            book.len()
        )));
    }
    Ok(book)
}

#[derive(Clone, Debug)]
pub struct MixtureLbFamily {
    pub family: LowerBoundFamily,
    pub codebook: Codebook,
    pub means: Vec<DVector<f64>>,
    /// Pairwise mean separation `Δ`.
    pub separation: f64,
    pub mixtures: Vec<Mixture>,
}

/// `Δ` with `Δ²/8 = d + 2√(dt) + 2t`, `t = 2 ln(k/ε)`.
pub fn mixture_separation(d: usize, k: usize, eps: f64) -> f64 {
    let d = d as f64;
    let t = 2.0 * (k as f64 / eps).ln();
    (8.0 * (d + 2.0 * (d * t).sqrt() + 2.0 * t)).sqrt()
}

/// Uniform `k`-mixtures, one per codeword `x`, with components `N(μᵢ, Σ_{xᵢ})`.
/// Means sit at `(Δ/√2)·eᵢ`, pairwise exactly `Δ` apart.
pub fn make_mixture_lb_family(d: usize, r: usize, k: usize, eps: f64, seed: u64) -> Result<MixtureLbFamily> {
    if k == 0 || k > d {
        return Err(Error::invalid(format!("need 1 ≤ k ≤ d, got k = {k}, d = {d}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    let family = make_lb_family(d, r, eps, MIXTURE_ALPHABET, derive_seed(seed, 0))?;
    let codebook = make_codebook(MIXTURE_ALPHABET, k, derive_seed(seed, 1))?;
    let separation = mixture_separation(d, k, eps);
    let means: Vec<DVector<f64>> = (0..k)
        .map(|i| {
            let mut m = DVector::zeros(d);
            if k > 1 {
                m[i] = separation / std::f64::consts::SQRT_2;
            }
            m
        })
        .collect();
    let mixtures = codebook
        .words
        .iter()
        .map(|w| {
            let comps = w
                .iter()
                .zip(&means)
                .map(|(&s, mu)| Gaussian::new(mu.clone(), family.sigmas[s as usize].clone()))
                .collect::<Result<Vec<_>>>()?;
            Mixture::new(vec![1.0 / k as f64; k], comps)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MixtureLbFamily {
        family,
        codebook,
        means,
        separation,
        mixtures,
    })
}

/// MC estimate of `max_a Pr_{g∼N(0, Σₐ)}[‖g‖ ≥ Δ/2]` with its standard error.
pub fn mean_concentration_mc(fam: &MixtureLbFamily, n: usize, seed: u64) -> Result<(f64, f64)> {
    let half = fam.separation / 2.0;
    let mut worst = (0.0, 0.0);
    for a in 0..fam.family.len() {
        let g = fam.family.gaussian(a)?;
        let mut rng = rng_from_seed(derive_seed(seed, a as u64));
        let hits = (0..n).filter(|_| (g.draw(&mut rng) - g.mean()).norm() >= half).count();
        let p = hits as f64 / n as f64;
        if p >= worst.0 {
            worst = (p, (p * (1.0 - p) / n as f64).sqrt());
        }
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FanoInputs {
    pub m: f64,
    /// Pairwise KL bound `β`.
    pub kappa: f64,
    /// Pairwise L1 separation `α`.
    pub alpha: f64,
    pub n: f64,
}

fn check_fano(inp: &FanoInputs) -> Result<()> {
    if !(inp.m >= 2.0) || !(inp.kappa >= 0.0) || !(inp.alpha > 0.0 && inp.alpha <= 2.0) || !(inp.n >= 0.0) {
        return Err(Error::invalid(format!("invalid Fano inputs {inp:?}")));
    }
    Ok(())
}

/// `α(ln M − nβ + ln 2)/(2 ln M)`, clamped at 0.
pub fn fano_error_bound(inp: &FanoInputs) -> Result<f64> {
    check_fano(inp)?;
    let lm = inp.m.ln();
    Ok((inp.alpha * (lm - inp.n * inp.kappa + 2f64.ln()) / (2.0 * lm)).max(0.0))
}

/// Sample count at which [`fano_error_bound`] falls to `target` (with `inp.n` ignored).
pub fn fano_samples_for(inp: &FanoInputs, target: f64) -> Result<f64> {
    check_fano(inp)?;
    if !(inp.kappa > 0.0) {
        return Err(Error::invalid("κ must be positive"));
    }
    let lm = inp.m.ln();
    Ok((lm + 2f64.ln() - 2.0 * target * lm / inp.alpha) / inp.kappa)
}

/// `ln M / (κ·ln(1/ε))`, the rate expression with constant 1.
pub fn fano_sample_lower(m: f64, kappa: f64, eps: f64) -> Result<f64> {
    if !(m >= 2.0) || !(kappa > 0.0) || !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid(format!("need M ≥ 2, κ > 0, ε ∈ (0, 1/2); got {m}, {kappa}, {eps}")));
    }
    Ok(m.ln() / (kappa * (1.0 / eps).ln()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FanoReport {
    pub m: usize,
    pub lambda: f64,
    /// Largest pairwise KL in the family.
    pub kappa: f64,
    pub kl_bound: f64,
    /// Smallest pairwise Frobenius gap.
    pub min_frobenius: f64,
    pub frobenius_lower: f64,
    /// Constant-1 rate `ln M/(κ ln(1/ε))`.
    pub sample_lower: Option<f64>,
}

pub fn fano_report(fam: &LowerBoundFamily, eps: f64) -> FanoReport {
    let m = fam.len();
    let kl = pairwise_kl(fam);
    let fr = pairwise_frobenius(fam);
    let mut kappa: f64 = 0.0;
    let mut min_fr = f64::INFINITY;
    for a in 0..m {
        for b in 0..m {
            if a != b {
                kappa = kappa.max(kl[(a, b)]);
                min_fr = min_fr.min(fr[(a, b)]);
            }
        }
    }
    FanoReport {
        m,
        lambda: fam.lambda,
        kappa,
        kl_bound: fam.kl_bound(),
        min_frobenius: if m > 1 { min_fr } else { 0.0 },
        frobenius_lower: fam.frobenius_lower(),
        sample_lower: fano_sample_lower(m as f64, kappa, eps).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::kl_gaussians;

    #[test]
    fn orthonormal_columns() {
        let u = random_orthonormal(7, 7, 1).unwrap();
        assert!((u.transpose() * &u - DMatrix::<f64>::identity(7, 7)).amax() < 1e-10);
        let u = random_orthonormal(9, 3, 2).unwrap();
        for c in u.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
        assert!(random_orthonormal(3, 4, 0).is_err());
    }

    #[test]
    fn random_subspace_overlap_mean() {
        let (d, cols) = (18, 2);
        let mean = (0..500)
            .map(|i| {
                let a = random_orthonormal(d, cols, derive_seed(10, 2 * i)).unwrap();
                let b = random_orthonormal(d, cols, derive_seed(10, 2 * i + 1)).unwrap();
                cross_frobenius_sq(&a, &b)
            })
            .sum::<f64>()
            / 500.0;
        let want = (cols * cols) as f64 / d as f64;
        assert!((mean / want - 1.0).abs() < 0.15, "mean {mean} vs {want}");
    }

    #[test]
    fn family_validation() {
        assert!(make_lb_family(18, 8, 0.5, 2, 0).is_err());
        assert!(make_lb_family(20, 9, 0.5, 2, 0).is_err());
        // λ = 2/√9 > 1/4
        assert!(make_lb_family(9, 9, 2.0, 2, 0).is_err());
        let one = make_lb_family(18, 9, 0.5, 1, 0).unwrap();
        assert_eq!((one.len(), one.rounds), (1, 1));
    }

    #[test]
    fn identical_pair_fails_the_overlap_check() {
        let u = random_orthonormal(18, 2, 3).unwrap();
        let check = frobenius_check(&[u.clone(), u], 18, 9);
        assert_eq!(check.violations, 1);
        assert!((check.max_cross - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kl_closed_form_matches_general_formula() {
        let fam = make_lb_family(18, 9, 0.5, 8, 4).unwrap();
        for a in 0..fam.len() {
            assert!(kl_pair(&fam, a, a).abs() < 1e-15);
            for b in 0..fam.len() {
                let kl = kl_gaussians(&fam.gaussian(a).unwrap(), &fam.gaussian(b).unwrap()).unwrap();
                assert!((kl - kl_pair(&fam, a, b)).abs() < 1e-9);
                assert!(kl_pair(&fam, a, b) <= fam.kl_bound() + 1e-15);
            }
        }
    }

    #[test]
    fn orthogonal_subspaces() {
        let mut e = DMatrix::zeros(18, 2);
        e[(0, 0)] = 1.0;
        e[(1, 1)] = 1.0;
        let mut f = DMatrix::zeros(18, 2);
        f[(2, 0)] = 1.0;
        f[(3, 1)] = 1.0;
        let fam = LowerBoundFamily::from_parts(18, 9, 0.1, vec![e, f]).unwrap();
        let l: f64 = 0.1;
        assert!((kl_pair(&fam, 0, 1) - l * l * 18.0 / (2.0 * 1.1 * 9.0)).abs() < 1e-15);
        let proxy = tv_pair_lower(&fam, 0, 1).unwrap();
        assert!(proxy >= 0.1 * 2f64.sqrt() / 2.0);
        assert_eq!(tv_pair_lower(&fam, 1, 1).unwrap(), 0.0);
    }

    #[test]
    fn invariants_hold() {
        let fam = make_lb_family(18, 9, 0.25, 6, 5).unwrap();
        let inv = fam.invariants().unwrap();
        assert!(inv.orthonormality < 1e-10);
        assert!(inv.inverse_identity < 1e-10);
        assert!(inv.spectrum < 1e-10);
        assert!(inv.log_det_spread < 1e-10);
    }

    #[test]
    fn codebooks() {
        let b = make_codebook(4, 1, 0).unwrap();
        assert!(b.len() >= 2);
        let mut b = make_codebook(4, 8, 1).unwrap();
        assert!(b.len() >= 16);
        assert!(b.min_distance().unwrap() >= 2);
        let dup = b.words[0].clone();
        assert!(!b.try_insert(dup));
    }

    #[test]
    fn mixture_family_shape() {
        let f = make_mixture_lb_family(9, 9, 3, 0.5, 2).unwrap();
        for i in 0..3 {
            for j in 0..i {
                assert!(((&f.means[i] - &f.means[j]).norm() - f.separation).abs() < 1e-12);
            }
        }
        assert_eq!(f.mixtures.len(), f.codebook.len());
        let one = make_mixture_lb_family(9, 9, 1, 0.5, 2).unwrap();
        assert!(one.mixtures.iter().all(|m| m.k() == 1));
    }

    #[test]
    fn fano_arithmetic() {
        let base = FanoInputs {
            m: 16.0,
            kappa: 0.1,
            alpha: 1.0,
            n: 0.0,
        };
        assert!(fano_error_bound(&base).unwrap() > 0.5);
        assert_eq!(fano_error_bound(&FanoInputs { n: 1e6, ..base }).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((fano_sample_lower(e, 1.0, 1.0 / e).unwrap() - 1.0).abs() < 1e-15);
        let a = fano_sample_lower(16.0, 0.3, 0.1).unwrap();
        let b = fano_sample_lower(256.0, 0.3, 0.1).unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fano_inversion() {
        let (d, eps, kappa): (f64, f64, f64) = (20.0, 0.2, 0.5);
        let inp = FanoInputs {
            m: 2f64.powf(d * d / 100.0),
            kappa: kappa * eps * eps,
            alpha: 2.0 * eps,
            n: 0.0,
        };
        let n = fano_samples_for(&inp, inp.alpha / 4.0).unwrap();
        let direct = (inp.m.ln() / 2.0 + 2f64.ln()) / inp.kappa;
        assert!((n - direct).abs() < 1e-9 * direct);
        let at = fano_error_bound(&FanoInputs { n, ..inp }).unwrap();
        assert!((at - inp.alpha / 4.0).abs() < 1e-12);
    }
}
