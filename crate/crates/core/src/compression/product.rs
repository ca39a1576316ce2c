//! Axis-aligned Gaussians as products of one-dimensional schemes.
//!
//! L1 distance between products is at most the sum over coordinates, so each coordinate
//! is encoded at accuracy `ε/d`. A coordinate tries `⌈log₃ 3d⌉` disjoint blocks, which
//! drives its failure probability below `1/3d`.

use nalgebra::{DMatrix, DVector};

use super::{check_eps, CompressionMessage, CompressionScheme, EncodeOutcome, MessageLayout, SchemeId, SchemeSpec, SharedScheme};
use crate::error::{Error, Result};
use crate::gaussmodels::{Distribution, Gaussian, LabeledSample};
use crate::rng::SeededRng;

#[derive(Clone)]
pub struct ProductScheme {
    base: SharedScheme,
    d: usize,
}

impl ProductScheme {
    pub fn new(base: SharedScheme, d: usize) -> Result<Self> {
        if base.dim() != 1 {
            return Err(Error::invalid("product base must be one-dimensional"));
        }
        if d == 0 {
            return Err(Error::invalid("product needs d ≥ 1"));
        }
        Ok(Self { base, d })
    }

    pub fn base(&self) -> &SharedScheme {
        &self.base
    }

    /// `⌈log₃ 3d⌉`.
    pub fn blocks(&self) -> usize {
        let mut b = 1;
        let mut p = 3usize;
        while p < 3 * self.d {
            p *= 3;
            b += 1;
        }
        b
    }

    fn base_eps(&self, eps: f64) -> f64 {
        eps / self.d as f64
    }
}

impl CompressionScheme for ProductScheme {
    fn id(&self) -> SchemeId {
        SchemeId::Product
    }

    fn name(&self) -> String {
        format!("product{}[{}]", self.d, self.base.name())
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn robustness(&self) -> f64 {
        // Marginals are no farther apart than the joint distributions.
        self.base.robustness()
    }

    fn spec(&self, eps: f64) -> Result<SchemeSpec> {
        check_eps(eps)?;
        let b = self.base.spec(self.base_eps(eps))?;
        let mut layout = MessageLayout::default();
        for _ in 0..self.d {
            layout.extend(&b.layout);
        }
        Ok(SchemeSpec {
            name: self.name(),
            eps,
            tau: self.d * b.tau,
            t_bits: self.d * b.t_bits,
            m_samples: self.blocks() * b.m_samples,
            robustness: self.robustness(),
            layout,
        })
    }

    fn encode(
        &self,
        truth: &Distribution,
        sample: &LabeledSample,
        eps: f64,
        rng: &mut SeededRng,
    ) -> Result<EncodeOutcome> {
        let g = truth
            .as_gaussian()
            .filter(|g| g.dim() == self.d && g.is_diagonal())
            .ok_or_else(|| Error::invalid("product scheme encodes axis-aligned Gaussians"))?;
        let spec = self.spec(eps)?;
        if sample.len() < spec.m_samples {
            return Err(Error::SampleTooShort {
                needed: spec.m_samples,
                got: sample.len(),
            });
        }
        let be = self.base_eps(eps);
        let m = self.base.spec(be)?.m_samples;
        let (mut refs, mut bits) = (Vec::with_capacity(spec.tau), Vec::with_capacity(spec.t_bits));
        for j in 0..self.d {
            let marg: Distribution = Gaussian::univariate(g.mean()[j], g.cov()[(j, j)].sqrt())?.into();
            let column = sample.marginal(j);
            let mut done = false;
            for blk in 0..self.blocks() {
                let local = LabeledSample::unlabeled(column[blk * m..(blk + 1) * m].to_vec());
                if let EncodeOutcome::Ok(msg) = self.base.encode(&marg, &local, be, rng)? {
                    refs.extend(msg.sample_refs.iter().map(|&r| r + (blk * m) as u32));
                    bits.extend(msg.bits);
                    done = true;
                    break;
                }
            }
            if !done {
                return Ok(EncodeOutcome::Failed(format!("coordinate {j}: every block failed")));
            }
        }
        Ok(EncodeOutcome::Ok(CompressionMessage::for_spec(refs, bits, &spec)?))
    }

    fn decode(&self, msg: &CompressionMessage, points: &[DVector<f64>], eps: f64) -> Result<Distribution> {
        let spec = self.spec(eps)?;
        msg.check_shape(&spec)?;
        let be = self.base_eps(eps);
        let b = self.base.spec(be)?;
        let pts = msg.referenced(points)?;
        let (mut mean, mut var) = (DVector::zeros(self.d), DVector::zeros(self.d));
        for j in 0..self.d {
            let local: Vec<DVector<f64>> = pts[j * b.tau..(j + 1) * b.tau]
                .iter()
                .map(|p| {
                    if p.len() != self.d {
                        return Err(Error::DimensionMismatch {
                            expected: self.d,
                            got: p.len(),
                        });
                    }
                    Ok(DVector::from_element(1, p[j]))
                })
                .collect::<Result<_>>()?;
            let sub = CompressionMessage {
                sample_refs: (0..b.tau as u32).collect(),
                bits: msg.bits[j * b.t_bits..(j + 1) * b.t_bits].to_vec(),
            };
            let dec = self.base.decode(&sub, &local, be)?;
            let g = dec
                .as_gaussian()
                .ok_or_else(|| Error::invalid("product base decoded a mixture"))?;
            mean[j] = g.mean()[0];
            var[j] = g.cov()[(0, 0)];
        }
        Ok(Gaussian::new(mean, DMatrix::from_diagonal(&var))?.into())
    }
}
