//! Robust one-dimensional scheme with four sample points and a single bit.
//!
//! `[μ − 2σ, μ + 2σ)` is cut into `4M` bins of width `σ/M`. A pair of points in bins `M`
//! apart spans roughly `σ`, a pair `3M` apart roughly `3σ`, and a pair in mirror-image
//! bins straddles `μ` symmetrically. The encoder names one scale pair, one mean pair and
//! which scale rule applies.

use nalgebra::DVector;

use super::{check_eps, BitField, CompressionMessage, CompressionScheme, EncodeOutcome, MessageLayout, SchemeId, SchemeSpec};
use crate::error::{Error, Result};
use crate::gaussmodels::{Distribution, Gaussian, LabeledSample};
use crate::nets::ceil_ratio;
use crate::rng::SeededRng;

/// Constant in `m(ε) = ⌈C/ε⌉`.
pub const G1D_ROBUST_M_CONST: f64 = 60.0;

/// Tolerated L1 contamination.
pub const G1D_ROBUST_R: f64 = 0.773;

#[derive(Clone, Copy, Debug)]
pub struct G1dRobustScheme {
    pub m_const: f64,
}

impl Default for G1dRobustScheme {
    fn default() -> Self {
        Self {
            m_const: G1D_ROBUST_M_CONST,
        }
    }
}

/// The four sample indices and scale bit chosen by the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RobustPick {
    pub x1: usize,
    pub x2: usize,
    pub y1: usize,
    pub y2: usize,
    /// `true` when the scale pair spans `3σ` rather than `σ`.
    pub b: bool,
}

/// The decoder: `N((x₁+x₂)/2, (y₁−y₂)²/9)` if `b`, else `N((x₁+x₂)/2, (y₁−y₂)²)`.
pub fn decode_g1d_robust(x1: f64, x2: f64, y1: f64, y2: f64, b: bool) -> Result<Gaussian> {
    let spread = (y1 - y2).abs();
    let sigma = if b { spread / 3.0 } else { spread };
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: sigma * sigma,
        });
    }
    Gaussian::univariate(0.5 * (x1 + x2), sigma)
}

impl G1dRobustScheme {
    /// `M = ⌈1/ε⌉`.
    pub fn bins_per_sigma(eps: f64) -> usize {
        ceil_ratio(1.0, eps) as usize
    }

    /// Chooses the points, or `None` when no qualifying pairs exist.
    pub fn pick(&self, mu: f64, sigma: f64, xs: &[f64], eps: f64) -> Option<RobustPick> {
        let m = Self::bins_per_sigma(eps);
        let width = sigma / m as f64;
        let lo = mu - 2.0 * sigma;
        // first[i] = index of the first point in bin i (1-based; 0 unused).
        let mut first = vec![usize::MAX; 4 * m + 1];
        for (idx, &x) in xs.iter().enumerate() {
            let pos = ((x - lo) / width).floor();
            if pos >= 0.0 && pos < (4 * m) as f64 {
                let bin = pos as usize + 1;
                if first[bin] == usize::MAX {
                    first[bin] = idx;
                }
            }
        }
        let has = |i: usize| first[i] != usize::MAX;
        let scale = (m + 1..=2 * m)
            .find(|&i| has(i) && has(i + m))
            .map(|i| (first[i], first[i + m], false))
            .or_else(|| {
                (1..=m)
                    .find(|&i| has(i) && has(i + 3 * m))
                    .map(|i| (first[i], first[i + 3 * m], true))
            })?;
        let mean = (1..=2 * m)
            .find(|&i| has(i) && has(4 * m - i + 1))
            .map(|i| (first[i], first[4 * m - i + 1]))?;
        Some(RobustPick {
            x1: mean.0,
            x2: mean.1,
            y1: scale.0,
            y2: scale.1,
            b: scale.2,
        })
    }
}

impl CompressionScheme for G1dRobustScheme {
    fn id(&self) -> SchemeId {
        SchemeId::G1dRobust
    }

    fn name(&self) -> String {
        "g1d_robust".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn robustness(&self) -> f64 {
        G1D_ROBUST_R
    }

    fn spec(&self, eps: f64) -> Result<SchemeSpec> {
        check_eps(eps)?;
        let layout = MessageLayout {
            fields: vec![BitField::for_cardinality(2)],
        };
        Ok(SchemeSpec {
            name: self.name(),
            eps,
            tau: 4,
            t_bits: 1,
            m_samples: ceil_ratio(self.m_const, eps) as usize,
            robustness: G1D_ROBUST_R,
            layout,
        })
    }

    fn encode(
        &self,
        truth: &Distribution,
        sample: &LabeledSample,
        eps: f64,
        _rng: &mut SeededRng,
    ) -> Result<EncodeOutcome> {
        let g = truth
            .as_gaussian()
            .filter(|g| g.dim() == 1)
            .ok_or_else(|| Error::invalid("g1d_robust encodes one-dimensional Gaussians"))?;
        let spec = self.spec(eps)?;
        if sample.len() < spec.m_samples {
            return Err(Error::SampleTooShort {
                needed: spec.m_samples,
                got: sample.len(),
            });
        }
        let xs: Vec<f64> = sample.points[..spec.m_samples].iter().map(|p| p[0]).collect();
        let Some(p) = self.pick(g.mean()[0], g.std_dev(), &xs, eps) else {
            return Ok(EncodeOutcome::Failed("no qualifying bin pairs".into()));
        };
        let refs = vec![p.x1 as u32, p.x2 as u32, p.y1 as u32, p.y2 as u32];
        Ok(EncodeOutcome::Ok(CompressionMessage::for_spec(refs, vec![p.b], &spec)?))
    }

    fn decode(&self, msg: &CompressionMessage, points: &[DVector<f64>], eps: f64) -> Result<Distribution> {
        let spec = self.spec(eps)?;
        msg.check_shape(&spec)?;
        let p = msg.referenced(points)?;
        Ok(decode_g1d_robust(p[0][0], p[1][0], p[2][0], p[3][0], msg.bits[0])?.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::tv_1d_gaussians;
    use crate::gaussmodels::Mixture;
    use crate::rng::rng_from_seed;

    #[test]
    fn decoder_fixtures() {
        let g = decode_g1d_robust(0.0, 2.0, 0.0, 3.0, true).unwrap();
        assert_eq!(g.mean()[0], 1.0);
        assert!((g.cov()[(0, 0)] - 1.0).abs() < 1e-15);
        let g = decode_g1d_robust(0.0, 0.0, 0.0, 1.0, false).unwrap();
        assert_eq!(g.mean()[0], 0.0);
        assert_eq!(g.cov()[(0, 0)], 1.0);
        for a in [-3.0, 0.0, 7.5] {
            assert_eq!(decode_g1d_robust(a, a, 1.0, 2.5, false).unwrap().mean()[0], a);
        }
        assert!(decode_g1d_robust(0.0, 1.0, 2.0, 2.0, false).is_err());
    }

    #[test]
    fn identical_points_fail() {
        let s = G1dRobustScheme::default();
        let sample = LabeledSample::from_scalars(&vec![0.3; 300]);
        let t: Distribution = Gaussian::univariate(0.0, 1.0).unwrap().into();
        assert!(!s.encode(&t, &sample, 0.2, &mut rng_from_seed(0)).unwrap().is_ok());
    }

    #[test]
    fn clean_and_contaminated_round_trips() {
        let s = G1dRobustScheme::default();
        let eps = 0.2;
        let truth = Gaussian::univariate(0.0, 1.0).unwrap();
        let q: Distribution = Mixture::new(
            vec![0.7, 0.3],
            vec![truth.clone(), Gaussian::univariate(50.0, 1.0).unwrap()],
        )
        .unwrap()
        .into();
        let t: Distribution = truth.clone().into();
        let mut rng = rng_from_seed(3);
        for source in [&t, &q] {
            let mut good = 0;
            for _ in 0..200 {
                let sample = source.sample(s.spec(eps).unwrap().m_samples, &mut rng);
                if let EncodeOutcome::Ok(msg) = s.encode(&t, &sample, eps, &mut rng).unwrap() {
                    assert_eq!((msg.sample_refs.len(), msg.bits.len()), (4, 1));
                    let dec = s.decode(&msg, &sample.points, eps).unwrap();
                    if tv_1d_gaussians(dec.as_gaussian().unwrap(), &truth).unwrap() <= eps {
                        good += 1;
                    }
                }
            }
            assert!(good >= 180, "good = {good}");
        }
    }
}
