//! Non-robust one-dimensional scheme with three sample points and `O(log 1/ε)` bits.
//!
//! With `g = (g₁ − g₂)/√2 ~ N(0, σ²)` the encoder sends `λ = σ/g` and `η = (μ − g₃)/σ`
//! on fixed grids, and the decoder returns `σ̂ = λ̂·g`, `μ̂ = g₃ + σ̂η̂`.

use nalgebra::DVector;

use super::{check_eps, CompressionMessage, CompressionScheme, EncodeOutcome, MessageLayout, SchemeId, SchemeSpec, BitField};
use crate::error::{Error, Result};
use crate::gaussmodels::{Distribution, Gaussian, LabeledSample};
use crate::nets::UniformGrid;
use crate::rng::SeededRng;

/// Lower cutoff `c` on `|g|/σ`.
pub const G1D_C_LO: f64 = 0.005;
/// Upper cutoff `C` on `|g|/σ` and on `|g₃ − μ|/σ`.
pub const G1D_C_HI: f64 = 2.8;

#[derive(Clone, Copy, Debug)]
pub struct G1dScheme {
    pub c_lo: f64,
    pub c_hi: f64,
}

impl Default for G1dScheme {
    fn default() -> Self {
        Self {
            c_lo: G1D_C_LO,
            c_hi: G1D_C_HI,
        }
    }
}

impl G1dScheme {
    /// Grid for `λ`: spacing `ε/2C²` out to `±1/c`.
    pub fn lambda_grid(&self, eps: f64) -> Result<UniformGrid> {
        UniformGrid::symmetric(1.0 / self.c_lo, eps / (2.0 * self.c_hi * self.c_hi))
    }

    /// Grid for `η`: spacing `ε/2` out to `±C`.
    pub fn eta_grid(&self, eps: f64) -> Result<UniformGrid> {
        UniformGrid::symmetric(self.c_hi, eps / 2.0)
    }
}

impl CompressionScheme for G1dScheme {
    fn id(&self) -> SchemeId {
        SchemeId::G1d
    }

    fn name(&self) -> String {
        "g1d".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn robustness(&self) -> f64 {
        0.0
    }

    fn spec(&self, eps: f64) -> Result<SchemeSpec> {
        check_eps(eps)?;
        let layout = MessageLayout {
            fields: vec![
                BitField::for_cardinality(self.lambda_grid(eps)?.count),
                BitField::for_cardinality(self.eta_grid(eps)?.count),
            ],
        };
        Ok(SchemeSpec {
            name: self.name(),
            eps,
            tau: 3,
            t_bits: layout.total_bits(),
            m_samples: 3,
            robustness: 0.0,
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
            .ok_or_else(|| Error::invalid("g1d encodes one-dimensional Gaussians"))?;
        if sample.len() < 3 {
            return Err(Error::SampleTooShort {
                needed: 3,
                got: sample.len(),
            });
        }
        let spec = self.spec(eps)?;
        let (mu, sigma) = (g.mean()[0], g.std_dev());
        let (g1, g2, g3) = (sample.points[0][0], sample.points[1][0], sample.points[2][0]);
        let gap = (g1 - g2) / std::f64::consts::SQRT_2;
        if !(gap.abs() > sigma * self.c_lo && gap.abs() < sigma * self.c_hi) {
            return Ok(EncodeOutcome::Failed(format!("|g|/σ = {:.4} outside (c, C)", gap.abs() / sigma)));
        }
        if (g3 - mu).abs() > self.c_hi * sigma {
            return Ok(EncodeOutcome::Failed("third point farther than Cσ from the mean".into()));
        }
        let lambda = sigma / gap;
        let eta = (mu - g3) / sigma;
        let li = self.lambda_grid(eps)?.nearest(lambda);
        let ei = self.eta_grid(eps)?.nearest(eta);
        let bits = spec.layout.pack(&[li, ei])?;
        Ok(EncodeOutcome::Ok(CompressionMessage::for_spec(vec![0, 1, 2], bits, &spec)?))
    }

    fn decode(&self, msg: &CompressionMessage, points: &[DVector<f64>], eps: f64) -> Result<Distribution> {
        let spec = self.spec(eps)?;
        msg.check_shape(&spec)?;
        let v = spec.layout.unpack(&msg.bits)?;
        let lambda = self.lambda_grid(eps)?.value(v[0]);
        let eta = self.eta_grid(eps)?.value(v[1]);
        let pts = msg.referenced(points)?;
        let (g1, g2, g3) = (pts[0][0], pts[1][0], pts[2][0]);
        let sigma = lambda * (g1 - g2) / std::f64::consts::SQRT_2;
        if !(sigma != 0.0 && sigma.is_finite()) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: sigma * sigma,
            });
        }
        let mu = g3 + sigma * eta;
        Ok(Gaussian::univariate(mu, sigma.abs())?.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::tv_1d_gaussians;
    use crate::rng::rng_from_seed;

    fn truth(mu: f64, s: f64) -> Distribution {
        Gaussian::univariate(mu, s).unwrap().into()
    }

    #[test]
    fn lambda_rounding_fixture() {
        let s = G1dScheme::default();
        let sample = LabeledSample::from_scalars(&[2f64.sqrt(), 0.0, 0.0]);
        let eps = 0.1;
        let msg = s.encode(&truth(0.0, 1.0), &sample, eps, &mut rng_from_seed(0)).unwrap();
        let msg = msg.message().unwrap();
        let v = s.spec(eps).unwrap().layout.unpack(&msg.bits).unwrap();
        let lam = s.lambda_grid(eps).unwrap().value(v[0]);
        assert!((lam - 1.0).abs() <= eps / (4.0 * G1D_C_HI * G1D_C_HI) + 1e-15);
        // g = 1 here, so σ̂ = λ̂; η̂ = 0 is on the grid, so μ̂ = g₃.
        let dec = s.decode(msg, &sample.points, eps).unwrap();
        let g = dec.as_gaussian().unwrap();
        assert!((g.std_dev() - lam).abs() < 1e-12);
        assert_eq!(g.mean()[0], 0.0);
    }

    #[test]
    fn equal_points_fail() {
        let s = G1dScheme::default();
        let sample = LabeledSample::from_scalars(&[0.3, 0.3, 0.0]);
        let out = s.encode(&truth(0.0, 1.0), &sample, 0.1, &mut rng_from_seed(0)).unwrap();
        assert!(!out.is_ok());
    }

    #[test]
    fn short_sample_is_an_error() {
        let s = G1dScheme::default();
        let sample = LabeledSample::from_scalars(&[0.3, 0.1]);
        assert!(matches!(
            s.encode(&truth(0.0, 1.0), &sample, 0.1, &mut rng_from_seed(0)),
            Err(Error::SampleTooShort { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn round_trip_accuracy() {
        let s = G1dScheme::default();
        let t = truth(3.0, 0.5);
        let mut rng = rng_from_seed(17);
        let mut ok = 0;
        for _ in 0..300 {
            let sample = t.sample(3, &mut rng);
            if let EncodeOutcome::Ok(msg) = s.encode(&t, &sample, 0.1, &mut rng).unwrap() {
                ok += 1;
                let dec = s.decode(&msg, &sample.points, 0.1).unwrap();
                let l1 = 2.0 * tv_1d_gaussians(dec.as_gaussian().unwrap(), t.as_gaussian().unwrap()).unwrap();
                assert!(l1 <= 0.1, "l1 = {l1}");
            }
        }
        assert!(ok >= 280);
    }

    #[test]
    fn decode_is_deterministic() {
        let s = G1dScheme::default();
        let t = truth(-1.0, 2.0);
        let mut rng = rng_from_seed(5);
        let sample = t.sample(3, &mut rng);
        let msg = s.encode(&t, &sample, 0.2, &mut rng).unwrap().into_message().unwrap();
        let a = s.decode(&msg, &sample.points, 0.2).unwrap();
        let b = s.decode(&msg, &sample.points, 0.2).unwrap();
        let (a, b) = (a.as_gaussian().unwrap(), b.as_gaussian().unwrap());
        assert_eq!(a.mean()[0].to_bits(), b.mean()[0].to_bits());
        assert_eq!(a.cov()[(0, 0)].to_bits(), b.cov()[(0, 0)].to_bits());
    }

    #[test]
    fn candidate_count_formula() {
        let s = G1dScheme::default();
        let spec = s.spec(0.3).unwrap();
        let nl = s.lambda_grid(0.3).unwrap().count as u128;
        let ne = s.eta_grid(0.3).unwrap().count as u128;
        assert_eq!(spec.message_count(7), 7u128.pow(3) * nl * ne);
    }
}
