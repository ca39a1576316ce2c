//! Scheffé tournament over a finite candidate set.
//!
//! For each pair `i < j` the Scheffé set is `A = {fᵢ > fⱼ}`. The pair is won by the
//! candidate whose own probability of `A` is closer to the holdout mass of `A`; ties go
//! to `i`. The returned index has the most wins, lowest index first. Probabilities of
//! `A` are exact in one dimension and Monte Carlo estimates otherwise.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussmodels::{Distribution, Gaussian};
use crate::rng::{derive_seed, rng_from_seed};

/// Default number of draws per candidate for Scheffé probabilities when `d > 1`.
pub const DEFAULT_N_SCHEFFE: usize = 5000;

/// Grid resolution for locating density crossings of one-dimensional mixtures.
const CROSSING_GRID: usize = 4000;

/// Half-width, in component standard deviations, of the crossing search window.
const CROSSING_SIGMAS: f64 = 12.0;

#[derive(Clone, Debug)]
pub struct CandidateSet {
    pub candidates: Vec<Distribution>,
    /// Where each candidate came from (message index, tag, ...).
    pub provenance: Vec<String>,
}

impl CandidateSet {
    pub fn new(candidates: Vec<Distribution>, provenance: Vec<String>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        if provenance.len() != candidates.len() {
            return Err(Error::invalid("one provenance entry per candidate"));
        }
        let d = candidates[0].dim();
        if let Some(c) = candidates.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: c.dim(),
            });
        }
        Ok(Self { candidates, provenance })
    }

    pub fn from_distributions(candidates: Vec<Distribution>) -> Result<Self> {
        let provenance = (0..candidates.len()).map(|i| format!("candidate {i}")).collect();
        Self::new(candidates, provenance)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.candidates[0].dim()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub index: usize,
    /// Pairwise wins per candidate; zero for candidates dropped by the shortlist.
    pub scheffe_wins: Vec<usize>,
    pub n_holdout: usize,
    /// Candidates that entered the tournament, in index order.
    pub entrants: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub n_scheffe: usize,
    /// When set and exceeded, only this many candidates with the highest mean holdout
    /// log-likelihood enter the tournament.
    pub shortlist: Option<usize>,
    /// Holdout points used for the shortlist ranking.
    pub screen_points: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            n_scheffe: DEFAULT_N_SCHEFFE,
            shortlist: None,
            screen_points: 1000,
        }
    }
}

/// `⌈ln(3M²/δ) / 2ε²⌉`: holdout size for `M` candidates at accuracy `ε` and
/// confidence `1 − δ`.
pub fn holdout_size(m: usize, eps: f64, delta: f64) -> usize {
    let m = m.max(1) as f64;
    ((3.0 * m * m / delta).ln() / (2.0 * eps * eps)).ceil() as usize
}

pub fn select_candidate(cands: &CandidateSet, holdout: &[DVector<f64>], seed: u64) -> Result<SelectionResult> {
    select_candidate_with(cands, holdout, &SelectionConfig::default(), seed)
}

pub fn select_candidate_with(
    cands: &CandidateSet,
    holdout: &[DVector<f64>],
    cfg: &SelectionConfig,
    seed: u64,
) -> Result<SelectionResult> {
    if cands.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let m = cands.len();
    if m == 1 {
        return Ok(SelectionResult {
            index: 0,
            scheffe_wins: vec![0],
            n_holdout: holdout.len(),
            entrants: vec![0],
        });
    }
    if holdout.is_empty() {
        return Err(Error::Empty("holdout sample"));
    }
    let d = cands.dim();
    if let Some(p) = holdout.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }
    let entrants = shortlist(cands, holdout, cfg);
    let c: Vec<&Distribution> = entrants.iter().map(|&i| &cands.candidates[i]).collect();
    let n = c.len();

    // Log densities of every entrant at every holdout point.
    let ln_hold: Vec<Vec<f64>> = c
        .par_iter()
        .map(|f| holdout.iter().map(|x| f.ln_pdf(x.as_slice())).collect())
        .collect();
    // In d > 1: each entrant's own draws and every entrant's log density there.
    let mc = (d > 1).then(|| {
        (0..n)
            .into_par_iter()
            .map(|a| {
                let mut rng = rng_from_seed(derive_seed(seed, entrants[a] as u64));
                let draws: Vec<DVector<f64>> = (0..cfg.n_scheffe).map(|_| c[a].draw_labeled(&mut rng).0).collect();
                c.iter()
                    .map(|f| draws.iter().map(|x| f.ln_pdf(x.as_slice())).collect::<Vec<f64>>())
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    });

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let winners: Vec<usize> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let emp = mass_where_greater(&ln_hold[i], &ln_hold[j]);
            let (pi, pj) = match &mc {
                None => scheffe_probs_1d(c[i], c[j]),
                Some(t) => (
                    mass_where_greater(&t[i][i], &t[i][j]),
                    mass_where_greater(&t[j][i], &t[j][j]),
                ),
            };
            if (pj - emp).abs() < (pi - emp).abs() {
                j
            } else {
                i
            }
        })
        .collect();
    let mut local_wins = vec![0usize; n];
    for w in winners {
        local_wins[w] += 1;
    }
    let best = (0..n).fold(0, |b, a| if local_wins[a] > local_wins[b] { a } else { b });
    let mut scheffe_wins = vec![0usize; m];
    for (a, &idx) in entrants.iter().enumerate() {
        scheffe_wins[idx] = local_wins[a];
    }
    Ok(SelectionResult {
        index: entrants[best],
        scheffe_wins,
        n_holdout: holdout.len(),
        entrants,
    })
}

fn shortlist(cands: &CandidateSet, holdout: &[DVector<f64>], cfg: &SelectionConfig) -> Vec<usize> {
    let m = cands.len();
    let keep = match cfg.shortlist {
        Some(k) if k >= 1 && k < m => k,
        _ => return (0..m).collect(),
    };
    let screen = &holdout[..cfg.screen_points.clamp(1, holdout.len())];
    let scores: Vec<f64> = cands
        .candidates
        .par_iter()
        .map(|f| {
            let s = screen.iter().map(|x| f.ln_pdf(x.as_slice())).sum::<f64>();
            if s.is_nan() {
                f64::NEG_INFINITY
            } else {
                s
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(keep);
    order.sort_unstable();
    order
}

/// Fraction of positions where `a > b`.
fn mass_where_greater(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).filter(|(x, y)| x > y).count() as f64 / a.len() as f64
}

/// Exact `(P_fᵢ(A), P_fⱼ(A))` for `A = {fᵢ > fⱼ}` on the line.
pub fn scheffe_probs_1d(fi: &Distribution, fj: &Distribution) -> (f64, f64) {
    let roots = match (fi.as_gaussian(), fj.as_gaussian()) {
        (Some(a), Some(b)) => gaussian_crossings(a, b),
        _ => mixture_crossings(fi, fj),
    };
    let h = |x: f64| fi.ln_pdf(&[x]) - fj.ln_pdf(&[x]);
    // Cut points, with a representative of each open interval between them.
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend(roots.iter().copied());
    edges.push(f64::INFINITY);
    let (mut pi, mut pj) = (0.0, 0.0);
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let probe = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (false, true) => hi - 1.0 - hi.abs() * 1e-3,
            (true, false) => lo + 1.0 + lo.abs() * 1e-3,
            (false, false) => 0.0,
        };
        if h(probe) > 0.0 {
            pi += fi.cdf_1d(hi) - fi.cdf_1d(lo);
            pj += fj.cdf_1d(hi) - fj.cdf_1d(lo);
        }
    }
    (pi.clamp(0.0, 1.0), pj.clamp(0.0, 1.0))
}

/// Roots of `ln N(x; μ₁, σ₁²) − ln N(x; μ₂, σ₂²)`, a quadratic in `x`.
fn gaussian_crossings(p: &Gaussian, q: &Gaussian) -> Vec<f64> {
    let (m1, s1) = (p.mean()[0], p.std_dev());
    let (m2, s2) = (q.mean()[0], q.std_dev());
    let (v1, v2) = (s1 * s1, s2 * s2);
    let a = 0.5 / v2 - 0.5 / v1;
    let b = m1 / v1 - m2 / v2;
    let c = 0.5 * m2 * m2 / v2 - 0.5 * m1 * m1 / v1 + (s2 / s1).ln();
    let scale = 1.0 / v1 + 1.0 / v2;
    if a.abs() <= 1e-14 * scale {
        return if b == 0.0 { Vec::new() } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc <= 0.0 {
        return Vec::new();
    }
    // Numerically stable pair of roots.
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    let mut r = vec![r1.min(r2), r1.max(r2)];
    r.dedup();
    r
}

fn mixture_crossings(fi: &Distribution, fj: &Distribution) -> Vec<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, g) in fi.components().into_iter().chain(fj.components()) {
        let (m, s) = (g.mean()[0], g.std_dev());
        lo = lo.min(m - CROSSING_SIGMAS * s);
        hi = hi.max(m + CROSSING_SIGMAS * s);
    }
    let h = |x: f64| fi.ln_pdf(&[x]) - fj.ln_pdf(&[x]);
    let step = (hi - lo) / CROSSING_GRID as f64;
    let mut roots = Vec::new();
    let mut x0 = lo;
    let mut h0 = h(x0);
    for s in 1..=CROSSING_GRID {
        let x1 = lo + s as f64 * step;
        let h1 = h(x1);
        if (h0 > 0.0) != (h1 > 0.0) {
            let (mut a, mut b, ha) = (x0, x1, h0);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if (h(mid) > 0.0) == (ha > 0.0) {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        x0 = x1;
        h0 = h1;
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::tv_1d;
    use crate::gaussmodels::Mixture;
    use crate::rng::rng_from_seed;

    fn g1(mu: f64, s: f64) -> Distribution {
        Gaussian::univariate(mu, s).unwrap().into()
    }

    #[test]
    fn single_candidate_wins() {
        let c = CandidateSet::from_distributions(vec![g1(0.0, 1.0)]).unwrap();
        assert_eq!(select_candidate(&c, &[], 0).unwrap().index, 0);
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(CandidateSet::from_distributions(vec![]).is_err());
    }

    #[test]
    fn near_candidate_beats_far_one() {
        let c = CandidateSet::from_distributions(vec![g1(0.0, 1.0), g1(10.0, 1.0)]).unwrap();
        let hold = g1(0.0, 1.0).sample(200, &mut rng_from_seed(1)).points;
        let r = select_candidate(&c, &hold, 0).unwrap();
        assert_eq!(r.index, 0);
        assert_eq!(r.scheffe_wins, vec![1, 0]);
        let c = CandidateSet::from_distributions(vec![g1(10.0, 1.0), g1(0.0, 1.0)]).unwrap();
        assert_eq!(select_candidate(&c, &hold, 0).unwrap().index, 1);
    }

    #[test]
    fn exact_probabilities_match_brute_force() {
        let pairs = [
            (g1(0.0, 1.0), g1(1.0, 1.0)),
            (g1(0.0, 1.0), g1(0.5, 3.0)),
            (g1(2.0, 0.1), g1(-1.0, 2.0)),
            (
                Mixture::new(vec![0.5, 0.5], vec![Gaussian::univariate(-2.0, 1.0).unwrap(), Gaussian::univariate(2.0, 0.5).unwrap()])
                    .unwrap()
                    .into(),
                g1(0.0, 2.0),
            ),
        ];
        for (a, b) in &pairs {
            let (pa, pb) = scheffe_probs_1d(a, b);
            // P_a(A) − P_b(A) is exactly the total variation distance.
            let tv = tv_1d(a, b).unwrap().value;
            assert!((pa - pb - tv).abs() < 1e-6, "{pa} {pb} {tv}");
            // Riemann sums of the densities over A.
            let (mut ra, mut rb) = (0.0, 0.0);
            let h = 1e-3;
            let mut x = -40.0;
            while x < 40.0 {
                let (la, lb) = (a.ln_pdf(&[x]), b.ln_pdf(&[x]));
                if la > lb {
                    ra += la.exp() * h;
                    rb += lb.exp() * h;
                }
                x += h;
            }
            assert!((pa - ra).abs() < 1e-3 && (pb - rb).abs() < 1e-3);
        }
    }

    #[test]
    fn permutation_moves_the_winner() {
        let cands: Vec<Distribution> = (0..6).map(|i| g1(i as f64 * 0.7 - 1.0, 1.0 + 0.2 * i as f64)).collect();
        let hold = g1(0.3, 1.2).sample(400, &mut rng_from_seed(5)).points;
        let r = select_candidate(&CandidateSet::from_distributions(cands.clone()).unwrap(), &hold, 3).unwrap();
        let perm = [4, 2, 0, 5, 1, 3];
        let permuted: Vec<Distribution> = perm.iter().map(|&i| cands[i].clone()).collect();
        let rp = select_candidate(&CandidateSet::from_distributions(permuted).unwrap(), &hold, 3).unwrap();
        assert_eq!(perm[rp.index], r.index);
    }

    #[test]
    fn multivariate_selection_is_deterministic() {
        let a: Distribution = Gaussian::standard(2).into();
        let b: Distribution = Gaussian::from_rows(vec![3.0, 0.0], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap().into();
        let c = CandidateSet::from_distributions(vec![b, a.clone()]).unwrap();
        let hold = a.sample(300, &mut rng_from_seed(2)).points;
        let r1 = select_candidate(&c, &hold, 9).unwrap();
        let r2 = select_candidate(&c, &hold, 9).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.index, 1);
    }

    #[test]
    fn shortlist_keeps_likely_candidates() {
        let cands: Vec<Distribution> = (0..50).map(|i| g1(i as f64, 1.0)).collect();
        let hold = g1(20.0, 1.0).sample(500, &mut rng_from_seed(7)).points;
        let cfg = SelectionConfig {
            shortlist: Some(5),
            ..Default::default()
        };
        let r = select_candidate_with(&CandidateSet::from_distributions(cands).unwrap(), &hold, &cfg, 0).unwrap();
        assert_eq!(r.entrants.len(), 5);
        assert!(r.entrants.contains(&20));
        assert_eq!(r.index, 20);
    }

    #[test]
    fn holdout_formula() {
        // ln(3·400/0.2)/(2·0.01) = ln(6000)/0.02
        assert_eq!(holdout_size(20, 0.1, 0.2), (6000f64.ln() / 0.02).ceil() as usize);
    }
}
