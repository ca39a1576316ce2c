//! ε-nets, per-coordinate quantizers and convex-hull geometry for the d-dimensional encoder.
//!
//! ℓ₂ nets are realized as scaled ℓ∞ grids. They cover, but their cardinality is larger
//! than the `(3/ε)^d` volumetric bound, which costs a constant factor in bit length.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SeededRng};

/// Largest net that will be materialized.
pub const NET_SIZE_LIMIT: f64 = 1e9;

/// Radius of the ball the difference hull must contain.
pub const HULL_RHO: f64 = 1.0 / 20.0;

/// Multiplier `C₀` in `m = ⌈C₀·d(1 + ln d)⌉`.
pub const HULL_M_MULTIPLIER: f64 = 40.0;

/// The constant `C` of the hull representation `Ψ⁻¹v/C ∈ conv(Y)`.
pub const HULL_C: f64 = 20.0;

/// Seed of the fixed direction set used by [`hull_contains_ball`].
const DIRECTION_SEED: u64 = 0x5EED_D1EC;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetMetric {
    L2Ball,
    LinfCube,
    LinfSimplexEmbedding,
}

#[derive(Clone, Debug)]
pub struct Net {
    pub points: Vec<DVector<f64>>,
    pub radius: f64,
    pub metric: NetMetric,
}

impl Net {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance from `x` to the nearest net point in the net's metric.
    pub fn distance_to(&self, x: &DVector<f64>) -> f64 {
        self.points
            .iter()
            .map(|p| match self.metric {
                NetMetric::L2Ball => (p - x).norm(),
                NetMetric::LinfCube | NetMetric::LinfSimplexEmbedding => (p - x).amax(),
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// An arithmetic progression `lo, lo + step, …, lo + (count−1)·step` used as a scalar
/// quantizer. Indices are serialized in [`UniformGrid::bits`] bits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub lo: f64,
    pub step: f64,
    pub count: u64,
}

impl UniformGrid {
    /// `{0, ±step, ±2·step, …, ±K·step}` with `K = ⌈half_range/step⌉`. Zero is on the grid.
    pub fn symmetric(half_range: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite() && half_range >= 0.0) {
            return Err(Error::invalid(format!("bad grid: half_range {half_range}, step {step}")));
        }
        let k = ceil_ratio(half_range, step);
        let count = 2.0 * k + 1.0;
        if count > u32::MAX as f64 {
            return Err(Error::NetTooLarge {
                size: count,
                limit: u32::MAX as f64,
            });
        }
        Ok(Self {
            lo: -k * step,
            step,
            count: count as u64,
        })
    }

    /// Centers of `n` equal cells partitioning `[lo, hi]`.
    pub fn cells(lo: f64, hi: f64, n: u64) -> Result<Self> {
        if n == 0 || !(hi > lo) {
            return Err(Error::invalid("empty cell grid"));
        }
        let step = (hi - lo) / n as f64;
        Ok(Self {
            lo: lo + 0.5 * step,
            step,
            count: n,
        })
    }

    pub fn value(&self, i: u64) -> f64 {
        self.lo + i as f64 * self.step
    }

    /// Index of the nearest grid value, clamped to the grid.
    pub fn nearest(&self, x: f64) -> u64 {
        let i = ((x - self.lo) / self.step).round();
        if i.is_nan() || i <= 0.0 {
            0
        } else {
            (i as u64).min(self.count - 1)
        }
    }

    pub fn quantize(&self, x: f64) -> (u64, f64) {
        let i = self.nearest(x);
        (i, self.value(i))
    }

    /// `⌈log₂ count⌉`.
    pub fn bits(&self) -> u32 {
        bits_for(self.count)
    }

    pub fn min_value(&self) -> f64 {
        self.lo
    }

    pub fn max_value(&self) -> f64 {
        self.value(self.count - 1)
    }
}

/// `⌈log₂ n⌉`, with 0 bits for `n ≤ 1`.
pub fn bits_for(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

/// `⌈a/b⌉` robust to `a/b` landing a rounding error above an integer.
pub(crate) fn ceil_ratio(a: f64, b: f64) -> f64 {
    let r = a / b;
    let nearest = r.round();
    if (r - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        r.ceil()
    }
}

fn guard(per_axis: f64, d: usize) -> Result<()> {
    let size = per_axis.powi(d as i32);
    if size > NET_SIZE_LIMIT {
        return Err(Error::NetTooLarge {
            size,
            limit: NET_SIZE_LIMIT,
        });
    }
    Ok(())
}

fn cartesian(axis: &[f64], d: usize) -> Vec<DVector<f64>> {
    let n = axis.len();
    let total = n.pow(d as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        out.push(DVector::from_fn(d, |i, _| axis[idx[i]]));
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    out
}

fn cube_axis(eps: f64) -> Result<UniformGrid> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1], got {eps}")));
    }
    UniformGrid::cells(-1.0, 1.0, ceil_ratio(1.0, eps) as u64)
}

/// Centers of the `⌈1/ε⌉^d` cubes of side `2/⌈1/ε⌉ ≤ 2ε` tiling `[−1, 1]^d`.
pub fn net_linf_cube(d: usize, eps: f64) -> Result<Net> {
    let axis = cube_axis(eps)?;
    guard(axis.count as f64, d)?;
    let values: Vec<f64> = (0..axis.count).map(|i| axis.value(i)).collect();
    Ok(Net {
        points: cartesian(&values, d),
        radius: eps,
        metric: NetMetric::LinfCube,
    })
}

/// Rounds each coordinate to the [`net_linf_cube`] grid. Returns per-coordinate indices
/// and the reconstruction.
pub fn quantize_linf(x: &DVector<f64>, eps: f64) -> Result<(Vec<u64>, DVector<f64>)> {
    let axis = cube_axis(eps)?;
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !(v.abs() <= 1.0)) {
        return Err(Error::OutOfRange { index, value });
    }
    let idx: Vec<u64> = x
        .iter()
        .map(|&v| (((v + 1.0) / axis.step).floor() as u64).min(axis.count - 1))
        .collect();
    let rec = DVector::from_fn(x.len(), |i, _| axis.value(idx[i]));
    Ok((idx, rec))
}

/// Inverse of [`quantize_linf`].
pub fn dequantize_linf(idx: &[u64], eps: f64) -> Result<DVector<f64>> {
    let axis = cube_axis(eps)?;
    if let Some(&i) = idx.iter().find(|&&i| i >= axis.count) {
        return Err(Error::MalformedMessage(format!("grid index {i} ≥ {}", axis.count)));
    }
    Ok(DVector::from_fn(idx.len(), |i, _| axis.value(idx[i])))
}

/// Per-coordinate quantizer for the ball of radius `R` whose reconstruction error is at
/// most `eps` in ℓ₂: cells of half-width `eps/√d` on each axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallGrid {
    pub dim: usize,
    pub radius: f64,
    pub eps: f64,
    pub axis: UniformGrid,
}

impl BallGrid {
    pub fn new(d: usize, eps: f64, radius: f64) -> Result<Self> {
        if d == 0 || !(eps > 0.0) || !(radius > 0.0) {
            return Err(Error::invalid("ball grid needs d ≥ 1, eps > 0, R > 0"));
        }
        let half = eps / (d as f64).sqrt();
        let axis = if eps >= radius {
            UniformGrid {
                lo: 0.0,
                step: 1.0,
                count: 1,
            }
        } else {
            let n = ceil_ratio(radius, half);
            UniformGrid::cells(-n * half, n * half, n as u64)?
        };
        Ok(Self {
            dim: d,
            radius,
            eps,
            axis,
        })
    }

    pub fn bits_per_coord(&self) -> u32 {
        self.axis.bits()
    }

    /// Quantizes `x`, which must lie in the ball (up to `eps`).
    pub fn quantize(&self, x: &DVector<f64>) -> Result<(Vec<u64>, DVector<f64>)> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.norm() > self.radius + self.eps {
            return Err(Error::invalid(format!(
                "point of norm {} outside the radius-{} ball",
                x.norm(),
                self.radius
            )));
        }
        let idx: Vec<u64> = x.iter().map(|&v| self.axis.nearest(v)).collect();
        let rec = self.reconstruct(&idx)?;
        Ok((idx, rec))
    }

    pub fn reconstruct(&self, idx: &[u64]) -> Result<DVector<f64>> {
        if let Some(&i) = idx.iter().find(|&&i| i >= self.axis.count) {
            return Err(Error::MalformedMessage(format!("grid index {i} ≥ {}", self.axis.count)));
        }
        Ok(DVector::from_fn(idx.len(), |i, _| self.axis.value(idx[i])))
    }
}

/// ℓ₂ net of the radius-`R` ball: the [`BallGrid`] points within `R + eps` of the origin.
/// Returns the origin alone when `eps ≥ R`.
pub fn net_l2_ball(d: usize, eps: f64, radius: f64) -> Result<Net> {
    let grid = BallGrid::new(d, eps, radius)?;
    guard(grid.axis.count as f64, d)?;
    let values: Vec<f64> = (0..grid.axis.count).map(|i| grid.axis.value(i)).collect();
    let points = cartesian(&values, d)
        .into_iter()
        .filter(|p| p.norm() <= radius + eps)
        .collect();
    Ok(Net {
        points,
        radius: eps,
        metric: NetMetric::L2Ball,
    })
}

/// ℓ∞ net of the probability simplex `Δ_k`, embedded in `[0, 1]^k`: all points of the
/// `eps`-cell grid within `eps` of the simplex, renormalized onto it.
pub fn net_linf_simplex(k: usize, eps: f64) -> Result<Net> {
    if k == 0 || !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid("simplex net needs k ≥ 1 and eps ∈ (0, 1]"));
    }
    // Lattice {i/n} with n = ⌈1/eps⌉: every simplex point rounds to a lattice point on
    // the simplex with ℓ∞ error ≤ 1/n ≤ eps.
    let n = ceil_ratio(1.0, eps) as usize;
    let count = binomial(n + k - 1, k - 1);
    if count > NET_SIZE_LIMIT {
        return Err(Error::NetTooLarge {
            size: count,
            limit: NET_SIZE_LIMIT,
        });
    }
    let mut points = Vec::with_capacity(count as usize);
    let mut parts = vec![0usize; k];
    compositions(n, 0, &mut parts, &mut |c| {
        points.push(DVector::from_fn(k, |i, _| c[i] as f64 / n as f64));
    });
    Ok(Net {
        points,
        radius: eps,
        metric: NetMetric::LinfSimplexEmbedding,
    })
}

fn compositions(remaining: usize, pos: usize, parts: &mut [usize], emit: &mut impl FnMut(&[usize])) {
    if pos + 1 == parts.len() {
        parts[pos] = remaining;
        emit(parts);
        return;
    }
    for v in 0..=remaining {
        parts[pos] = v;
        compositions(remaining - v, pos + 1, parts, emit);
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Outcome of [`hull_contains_ball`].
#[derive(Clone, Debug)]
pub struct HullCheck {
    pub contained: bool,
    /// Smallest support-function value `max_i ⟨y, tᵢ⟩` over the tested unit directions.
    pub min_support: f64,
    /// The minimizing direction; a separating direction when `!contained`.
    pub certificate: DVector<f64>,
    pub directions_tested: usize,
}

fn support(points: &[DVector<f64>], y: &DVector<f64>) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, t) in points.iter().enumerate() {
        let v = t.dot(y);
        if v > best.0 {
            best = (v, i);
        }
    }
    best
}

/// Tests `rho·B₂^d ⊆ conv(T)` through the support function `h(y) = max_i ⟨y, tᵢ⟩`:
/// containment holds iff `h(y) ≥ rho` for every unit `y`.
///
/// The directions tested are the `2d` signed axes, `10·3^min(d,6)` fixed pseudo-random
/// unit vectors, and a projected-subgradient descent on the sphere started from the five
/// worst of those. A `false` answer is exact (the certificate separates); a `true` answer
/// is exact only up to the density of the direction set.
pub fn hull_contains_ball(points: &[DVector<f64>], rho: f64) -> Result<HullCheck> {
    let d = points.first().ok_or(Error::Empty("hull point set"))?.len();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }
    let mut dirs: Vec<DVector<f64>> = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = DVector::zeros(d);
            e[i] = s;
            dirs.push(e);
        }
    }
    let mut rng = rng_from_seed(DIRECTION_SEED ^ d as u64);
    let n_random = 10 * 3usize.pow(d.min(6) as u32);
    for _ in 0..n_random {
        dirs.push(random_unit(d, &mut rng));
    }
    let mut scored: Vec<(f64, usize)> = dirs
        .iter()
        .enumerate()
        .map(|(i, y)| (support(points, y).0, i))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let (mut best_val, mut best_dir) = (scored[0].0, dirs[scored[0].1].clone());
    let mut tested = dirs.len();
    for &(_, start) in scored.iter().take(5) {
        let mut y = dirs[start].clone();
        for it in 0..200 {
            let (h, arg) = support(points, &y);
            tested += 1;
            if h < best_val {
                best_val = h;
                best_dir = y.clone();
            }
            let step = 0.5 / (1.0 + it as f64).sqrt();
            let g = &points[arg];
            // Project the subgradient onto the tangent space before stepping.
            let tangent = g - &y * g.dot(&y);
            let norm = tangent.norm();
            if norm < 1e-15 {
                break;
            }
            y -= tangent * (step / norm);
            y /= y.norm();
        }
    }
    Ok(HullCheck {
        contained: best_val >= rho - 1e-9,
        min_support: best_val,
        certificate: best_dir,
        directions_tested: tested,
    })
}

pub(crate) fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Draws the hull test point set: `m = ⌈c0·d(1+ln d)⌉` points, a fraction
/// `contamination` of which is replaced by a point mass at `100·e₁`, and the rest
/// standard normal. Points of norm above `4√d` are then discarded.
pub fn sample_hull_points(d: usize, c0: f64, contamination: f64, rng: &mut SeededRng) -> Vec<DVector<f64>> {
    let m = hull_sample_size(d, c0);
    let n_bad = (contamination * m as f64).floor() as usize;
    let cap = 4.0 * (d as f64).sqrt();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let p = if i < n_bad {
            let mut e = DVector::zeros(d);
            e[0] = 100.0;
            e
        } else {
            DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
        };
        if p.norm() <= cap {
            out.push(p);
        }
    }
    out
}

/// `⌈c0·d(1 + ln d)⌉`.
pub fn hull_sample_size(d: usize, c0: f64) -> usize {
    let d = d as f64;
    (c0 * d * (1.0 + d.ln())).ceil() as usize
}

/// Minimum-ℓ∞ representation of `target` in the span of `points`, with its norm.
#[derive(Clone, Debug)]
pub struct HullSolution {
    pub theta: Vec<f64>,
    /// `min ‖θ‖∞` subject to `Σθᵢtᵢ = target`; `∞` when `target` is not in the span.
    pub min_linf: f64,
}

/// Coefficients `θ ∈ [−1, 1]^|T|` with `Σ θᵢtᵢ = target`, chosen with minimum `‖θ‖∞`.
/// Fails with [`Error::Infeasible`] when the minimum exceeds 1.
///
/// `‖θ‖∞ ≤ 1` describes the zonotope `Σ[−1,1]tᵢ`, which contains `conv(T ∪ −T)`; so
/// every target in the symmetric hull is accepted, and a rejected target is certainly
/// outside it.
pub fn solve_hull_coefficients(points: &[DVector<f64>], target: &DVector<f64>) -> Result<Vec<f64>> {
    let sol = min_linf_coefficients(points, target)?;
    if sol.min_linf > 1.0 + 1e-12 {
        return Err(Error::Infeasible {
            min_linf: sol.min_linf,
        });
    }
    Ok(sol.theta.into_iter().map(|t| t.clamp(-1.0, 1.0)).collect())
}

/// Solves `min ‖θ‖∞ s.t. Σθᵢtᵢ = target` exactly.
///
/// With `θ = φ/s` this is the linear program `max s s.t. Aφ − s·target = 0, φ ∈ [−1, 1]^n,
/// s ≥ 0`, whose optimum is `s* = 1/min‖θ‖∞`. It has only `d` equality rows, so a
/// bounded-variable simplex on a `d × (n + 1)` tableau solves it cheaply.
pub fn min_linf_coefficients(points: &[DVector<f64>], target: &DVector<f64>) -> Result<HullSolution> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Empty("hull point set"));
    }
    let d = target.len();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }
    if target.iter().all(|&v| v == 0.0) {
        return Ok(HullSolution {
            theta: vec![0.0; n],
            min_linf: 0.0,
        });
    }
    // Columns: φ₁..φₙ, s.
    let a = DMatrix::from_fn(d, n + 1, |i, j| if j < n { points[j][i] } else { -target[i] });
    let mut lower = vec![-1.0; n + 1];
    let mut upper = vec![1.0; n + 1];
    lower[n] = 0.0;
    upper[n] = f64::INFINITY;
    let mut cost = vec![0.0; n + 1];
    cost[n] = -1.0;
    let x = BoundedSimplex::solve(&a, &lower, &upper, &cost)?;
    let s = x[n];
    if !(s > 0.0) {
        return Ok(HullSolution {
            theta: vec![0.0; n],
            min_linf: f64::INFINITY,
        });
    }
    let theta: Vec<f64> = x[..n].iter().map(|v| v / s).collect();
    Ok(HullSolution {
        min_linf: 1.0 / s,
        theta,
    })
}

/// Dense bounded-variable primal simplex for `min cᵀx s.t. Ax = 0, l ≤ x ≤ u`, where
/// every lower bound is finite. Two phases with one artificial per row and Bland's rule.
struct BoundedSimplex {
    tab: DMatrix<f64>,
    basis: Vec<usize>,
    x: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

const PIVOT_TOL: f64 = 1e-11;

impl BoundedSimplex {
    fn solve(a: &DMatrix<f64>, lower: &[f64], upper: &[f64], cost: &[f64]) -> Result<Vec<f64>> {
        let (m, n) = a.shape();
        let total = n + m;
        // Start every structural variable at its lower bound; artificials absorb the residual.
        let mut x: Vec<f64> = lower.to_vec();
        let resid: Vec<f64> = (0..m).map(|i| -(0..n).map(|j| a[(i, j)] * x[j]).sum::<f64>()).collect();
        let mut tab = DMatrix::zeros(m, total);
        for i in 0..m {
            let sign = if resid[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                tab[(i, j)] = sign * a[(i, j)];
            }
            tab[(i, n + i)] = 1.0;
            x.push(resid[i].abs());
        }
        let mut lo = lower.to_vec();
        let mut up = upper.to_vec();
        lo.extend(std::iter::repeat(0.0).take(m));
        up.extend(std::iter::repeat(f64::INFINITY).take(m));
        let mut lp = BoundedSimplex {
            tab,
            basis: (n..total).collect(),
            x,
            lower: lo,
            upper: up,
        };
        let mut phase1 = vec![0.0; total];
        phase1[n..].iter_mut().for_each(|c| *c = 1.0);
        lp.run(&phase1)?;
        let infeas: f64 = lp.x[n..].iter().sum();
        let scale = a.amax().max(1.0);
        if infeas > 1e-9 * scale {
            return Err(Error::Construction(format!("hull LP phase one left residual {infeas:.3e}")));
        }
        for j in n..total {
            lp.upper[j] = 0.0;
            lp.x[j] = lp.x[j].clamp(0.0, 0.0);
        }
        let mut phase2 = cost.to_vec();
        phase2.extend(std::iter::repeat(0.0).take(m));
        lp.run(&phase2)?;
        lp.polish(a);
        Ok(lp.x[..n].to_vec())
    }

    fn run(&mut self, cost: &[f64]) -> Result<()> {
        let (m, total) = self.tab.shape();
        let max_iter = 50 * (m + total);
        for _ in 0..max_iter {
            // Reduced costs of nonbasic columns.
            let mut entering = None;
            let mut in_basis = vec![false; total];
            for &b in &self.basis {
                in_basis[b] = true;
            }
            for j in 0..total {
                if in_basis[j] || self.lower[j] == self.upper[j] {
                    continue;
                }
                let rc = cost[j] - (0..m).map(|i| cost[self.basis[i]] * self.tab[(i, j)]).sum::<f64>();
                let at_lower = self.x[j] <= self.lower[j];
                if (at_lower && rc < -1e-12) || (!at_lower && rc > 1e-12) {
                    entering = Some((j, if at_lower { 1.0 } else { -1.0 }));
                    break;
                }
            }
            let Some((j, dir)) = entering else {
                return Ok(());
            };
            // Ratio test; basic values move by −dir·θ·tab[:, j].
            let mut step = self.upper[j] - self.lower[j];
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..m {
                let alpha = -dir * self.tab[(i, j)];
                let b = self.basis[i];
                let limit = if alpha < -PIVOT_TOL {
                    (self.x[b] - self.lower[b]).max(0.0) / -alpha
                } else if alpha > PIVOT_TOL && self.upper[b].is_finite() {
                    (self.upper[b] - self.x[b]).max(0.0) / alpha
                } else {
                    continue;
                };
                let better = match leave {
                    None => limit < step,
                    Some((r, _)) => limit < step || (limit == step && b < self.basis[r]),
                };
                if better {
                    step = limit;
                    leave = Some((i, alpha > 0.0));
                }
            }
            if step.is_infinite() {
                return Err(Error::Construction("hull LP is unbounded".into()));
            }
            self.x[j] += dir * step;
            for i in 0..m {
                let b = self.basis[i];
                self.x[b] -= dir * step * self.tab[(i, j)];
            }
            if let Some((r, to_upper)) = leave {
                let b = self.basis[r];
                self.x[b] = if to_upper { self.upper[b] } else { self.lower[b] };
                let piv = self.tab[(r, j)];
                for c in 0..total {
                    self.tab[(r, c)] /= piv;
                }
                for i in 0..m {
                    if i != r {
                        let f = self.tab[(i, j)];
                        if f != 0.0 {
                            for c in 0..total {
                                let v = self.tab[(r, c)];
                                self.tab[(i, c)] -= f * v;
                            }
                        }
                    }
                }
                self.basis[r] = j;
            }
        }
        Err(Error::Construction("hull LP hit the iteration limit".into()))
    }

    /// Recomputes the basic structural values from the original system so the final
    /// residual carries no accumulated pivoting error.
    fn polish(&mut self, a: &DMatrix<f64>) {
        let (m, n) = a.shape();
        let structural: Vec<(usize, usize)> = self
            .basis
            .iter()
            .enumerate()
            .filter(|(_, &b)| b < n)
            .map(|(i, &b)| (i, b))
            .collect();
        if structural.is_empty() {
            return;
        }
        let mut rhs = DVector::zeros(m);
        let mut is_basic = vec![false; n];
        for &(_, b) in &structural {
            is_basic[b] = true;
        }
        for j in (0..n).filter(|&j| !is_basic[j]) {
            for i in 0..m {
                rhs[i] -= a[(i, j)] * self.x[j];
            }
        }
        let bmat = DMatrix::from_fn(m, structural.len(), |i, k| a[(i, structural[k].1)]);
        if let Ok(sol) = bmat.svd(true, true).solve(&rhs, 1e-14) {
            let candidate: Vec<f64> = sol.iter().copied().collect();
            let ok = structural.iter().zip(&candidate).all(|(&(_, b), &v)| {
                v >= self.lower[b] - 1e-9 && v <= self.upper[b] + 1e-9
            });
            if ok {
                for (&(_, b), v) in structural.iter().zip(candidate) {
                    self.x[b] = v.clamp(self.lower[b], self.upper[b]);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    #[test]
    fn cube_net_fixtures() {
        let n = net_linf_cube(1, 0.5).unwrap();
        let mut pts: Vec<f64> = n.points.iter().map(|p| p[0]).collect();
        pts.sort_by(f64::total_cmp);
        assert_eq!(pts, vec![-0.5, 0.5]);
        let n = net_linf_cube(2, 1.0).unwrap();
        assert_eq!(n.len(), 1);
        assert_eq!(n.points[0], v(&[0.0, 0.0]));
        let n = net_linf_cube(1, 0.25).unwrap();
        assert_eq!(n.len(), 4);
        for i in 0..=2000 {
            let q = v(&[-1.0 + i as f64 / 1000.0]);
            assert!(n.distance_to(&q) <= 0.25 + 1e-15);
        }
    }

    #[test]
    fn cube_net_covers_2d_exhaustively() {
        for eps in [0.3, 0.5, 0.7] {
            let n = net_linf_cube(2, eps).unwrap();
            for i in 0..=100 {
                for j in 0..=100 {
                    let q = v(&[-1.0 + i as f64 / 50.0, -1.0 + j as f64 / 50.0]);
                    assert!(n.distance_to(&q) <= eps + 1e-12);
                }
            }
        }
    }

    #[test]
    fn cube_net_guard() {
        assert!(matches!(net_linf_cube(10, 0.1), Err(Error::NetTooLarge { .. })));
        assert!(net_linf_cube(2, 0.0).is_err());
    }

    #[test]
    fn quantize_fixtures() {
        let (idx, rec) = quantize_linf(&v(&[0.73]), 0.25).unwrap();
        assert_eq!(idx, vec![3]);
        assert_eq!(rec[0], 0.75);
        let (_, rec) = quantize_linf(&v(&[0.0, 0.0]), 0.3).unwrap();
        assert!(rec.amax() <= 0.3);
        assert!(matches!(quantize_linf(&v(&[1.5]), 0.25), Err(Error::OutOfRange { index: 0, .. })));
        assert_eq!(dequantize_linf(&idx, 0.25).unwrap()[0], 0.75);
    }

    #[test]
    fn quantize_round_trip_sweep() {
        let mut rng = rng_from_seed(12);
        for _ in 0..1000 {
            let eps = rng.random_range(0.01..1.0);
            let x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..=1.0));
            let (idx, rec) = quantize_linf(&x, eps).unwrap();
            assert!((&x - &rec).amax() <= eps + 1e-15);
            assert_eq!(dequantize_linf(&idx, eps).unwrap(), rec);
        }
    }

    #[test]
    fn l2_net_fixtures() {
        let n = net_l2_ball(1, 1.0, 1.0).unwrap();
        assert!(n.len() <= 2);
        let n = net_l2_ball(3, 2.0, 2.0).unwrap();
        assert_eq!(n.points, vec![DVector::zeros(3)]);
        let r = 4.0 * 2f64.sqrt();
        let n = net_l2_ball(2, 0.5, r).unwrap();
        let mut rng = rng_from_seed(2);
        for _ in 0..2000 {
            let q = random_unit(2, &mut rng) * (r * rng.random::<f64>().sqrt());
            assert!(n.distance_to(&q) <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn ball_grid_round_trip() {
        let g = BallGrid::new(3, 0.05, 4.0 * 3f64.sqrt()).unwrap();
        let mut rng = rng_from_seed(3);
        for _ in 0..500 {
            let x = random_unit(3, &mut rng) * (g.radius * rng.random::<f64>());
            let (idx, rec) = g.quantize(&x).unwrap();
            assert!((&x - &rec).norm() <= g.eps + 1e-12);
            assert_eq!(g.reconstruct(&idx).unwrap(), rec);
        }
    }

    #[test]
    fn simplex_net_covers() {
        let n = net_linf_simplex(3, 0.2).unwrap();
        let mut rng = rng_from_seed(4);
        for _ in 0..500 {
            let raw: Vec<f64> = (0..3).map(|_| -rng.random::<f64>().ln()).collect();
            let s: f64 = raw.iter().sum();
            let w = DVector::from_fn(3, |i, _| raw[i] / s);
            assert!(n.distance_to(&w) <= 0.2 + 1e-12);
        }
        for p in &n.points {
            assert!((p.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_helpers() {
        let g = UniformGrid::symmetric(1.0, 0.25).unwrap();
        assert_eq!(g.count, 9);
        assert_eq!(g.value(4), 0.0);
        assert_eq!(g.bits(), 4);
        assert_eq!(g.quantize(0.3), (5, 0.25));
        assert_eq!(g.nearest(10.0), 8);
        assert_eq!(bits_for(1), 0);
        assert_eq!(bits_for(2), 1);
        assert_eq!(bits_for(1024), 10);
        assert_eq!(bits_for(1025), 11);
    }

    #[test]
    fn cross_polytope_contains_inscribed_ball() {
        for d in 1..=4 {
            let mut t = Vec::new();
            for i in 0..d {
                for s in [1.0, -1.0] {
                    let mut e = DVector::zeros(d);
                    e[i] = s;
                    t.push(e);
                }
            }
            let rho = 1.0 / (d as f64).sqrt();
            assert!(hull_contains_ball(&t, rho).unwrap().contained, "d={d}");
            assert!(!hull_contains_ball(&t, rho * 1.01).unwrap().contained || d == 1);
        }
    }

    #[test]
    fn flat_hull_is_rejected_with_certificate() {
        let t = vec![v(&[1.0, 0.0]), v(&[-1.0, 0.0])];
        let c = hull_contains_ball(&t, 0.1).unwrap();
        assert!(!c.contained);
        assert!(c.certificate[1].abs() > 0.999);
    }

    #[test]
    fn hull_fixtures() {
        let t = vec![v(&[1.0, 0.0, 0.0]), v(&[0.0, 2.0, 0.0]), v(&[0.0, 0.0, 3.0])];
        let th = solve_hull_coefficients(&t, &t[0]).unwrap();
        assert!((th[0] - 1.0).abs() < 1e-12 && th[1].abs() < 1e-12 && th[2].abs() < 1e-12);
        let th = solve_hull_coefficients(&t, &DVector::zeros(3)).unwrap();
        assert!(th.iter().all(|&x| x == 0.0));
        let target = (&t[0] + &t[1]) * 0.5;
        let th = solve_hull_coefficients(&t, &target).unwrap();
        let rec: DVector<f64> = t.iter().zip(&th).map(|(p, c)| p * *c).sum();
        assert!((rec - target).norm() < 1e-12);
        let far = v(&[5.0, 0.0, 0.0]);
        assert!(matches!(
            solve_hull_coefficients(&t, &far),
            Err(Error::Infeasible { min_linf }) if (min_linf - 5.0).abs() < 1e-9
        ));
    }

    #[test]
    fn out_of_span_target_is_infeasible() {
        let t = vec![v(&[1.0, 0.0]), v(&[2.0, 0.0])];
        let sol = min_linf_coefficients(&t, &v(&[0.0, 1.0])).unwrap();
        assert!(sol.min_linf.is_infinite());
        // Redundant rows must not trip phase one.
        let sol = min_linf_coefficients(&t, &v(&[1.5, 0.0])).unwrap();
        assert!((sol.min_linf - 0.5).abs() < 1e-12);
    }

    #[test]
    fn min_linf_matches_brute_force_in_2d() {
        // Two points in the plane: the representation is unique.
        let mut rng = rng_from_seed(21);
        for _ in 0..200 {
            let t: Vec<DVector<f64>> = (0..2).map(|_| random_unit(2, &mut rng)).collect();
            let b = random_unit(2, &mut rng) * 0.3;
            let m = nalgebra::Matrix2::new(t[0][0], t[1][0], t[0][1], t[1][1]);
            let Some(inv) = m.try_inverse() else { continue };
            let exact = inv * nalgebra::Vector2::new(b[0], b[1]);
            let sol = min_linf_coefficients(&t, &b).unwrap();
            assert!((sol.min_linf - exact.amax()).abs() < 1e-9 * exact.amax().max(1.0));
        }
    }

    #[test]
    fn random_hull_residuals() {
        let mut rng = rng_from_seed(31);
        for d in 2..=5 {
            let pts = sample_hull_points(d, HULL_M_MULTIPLIER, 0.0, &mut rng);
            for _ in 0..20 {
                let target = random_unit(d, &mut rng) * HULL_RHO;
                let th = solve_hull_coefficients(&pts, &target).unwrap();
                assert!(th.iter().all(|x| x.abs() <= 1.0));
                let rec: DVector<f64> = pts.iter().zip(&th).map(|(p, c)| p * *c).sum();
                assert!((rec - &target).norm() <= 1e-8 * (1.0 + target.norm()));
            }
        }
    }

    #[test]
    fn containment_implies_feasibility() {
        let mut rng = rng_from_seed(41);
        let pts = sample_hull_points(3, HULL_M_MULTIPLIER, 1.0 / 3.0, &mut rng);
        let c = hull_contains_ball(&pts, HULL_RHO).unwrap();
        assert!(c.contained);
        for _ in 0..100 {
            let y = random_unit(3, &mut rng) * HULL_RHO;
            assert!(solve_hull_coefficients(&pts, &y).is_ok());
        }
    }
}
