//! Mixtures of `k` components from a scheme for one component.
//!
//! Each non-negligible component is encoded at `ε/3` from the points it generated, and
//! each weight is sent on a grid of `⌈3k/2ε⌉` cells. Components of weight at most `ε/6k`
//! get a filler message; the decoder falls back to `N(0, I)` for them.

use nalgebra::DVector;

use super::{check_eps, BitField, CompressionMessage, CompressionScheme, EncodeOutcome, MessageLayout, SchemeId, SchemeSpec, SharedScheme};
use crate::error::{Error, Result};
use crate::gaussmodels::{Distribution, Gaussian, LabeledSample, Mixture};
use crate::nets::{ceil_ratio, UniformGrid};
use crate::rng::SeededRng;

#[derive(Clone)]
pub struct MixtureScheme {
    base: SharedScheme,
    k: usize,
}

/// Terms of the L1 error bound for a given weight vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureErrorBudget {
    /// `Σ 2wᵢ` over components with `wᵢ ≤ ε/6k`.
    pub negligible: f64,
    /// Component error, `ε/3`.
    pub components: f64,
    /// Weight rounding, `k · ε/3k`.
    pub weights: f64,
    pub total: f64,
    pub eps: f64,
}

impl MixtureErrorBudget {
    pub fn within(&self) -> bool {
        self.total <= self.eps * (1.0 + 1e-12)
    }
}

pub fn mixture_error_budget(weights: &[f64], eps: f64) -> MixtureErrorBudget {
    let k = weights.len() as f64;
    let cut = eps / (6.0 * k);
    let negligible = weights.iter().filter(|&&w| w <= cut).map(|w| 2.0 * w).sum();
    let components = eps / 3.0;
    let weights_term = k * eps / (3.0 * k);
    MixtureErrorBudget {
        negligible,
        components,
        weights: weights_term,
        total: negligible + components + weights_term,
        eps,
    }
}

impl MixtureScheme {
    pub fn new(base: SharedScheme, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("mixture needs k ≥ 1"));
        }
        Ok(Self { base, k })
    }

    pub fn base(&self) -> &SharedScheme {
        &self.base
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weight_grid(&self, eps: f64) -> Result<UniformGrid> {
        UniformGrid::cells(0.0, 1.0, ceil_ratio(3.0 * self.k as f64, 2.0 * eps) as u64)
    }

    /// `⌈log₂(3k/ε)⌉` bits per weight.
    pub fn weight_bits(&self, eps: f64) -> u32 {
        ceil_ratio(3.0 * self.k as f64, eps).log2().ceil() as u32
    }

    /// `⌈log₃ 6k⌉` attempts per component.
    pub fn blocks(&self) -> usize {
        let mut b = 1;
        let mut p = 3usize;
        while p < 6 * self.k {
            p *= 3;
            b += 1;
        }
        b
    }

    /// Weight at or below which a component is skipped.
    pub fn negligible_weight(&self, eps: f64) -> f64 {
        eps / (6.0 * self.k as f64)
    }

    fn base_eps(eps: f64) -> f64 {
        eps / 3.0
    }
}

impl CompressionScheme for MixtureScheme {
    fn id(&self) -> SchemeId {
        SchemeId::Mixture
    }

    fn name(&self) -> String {
        format!("mixture{}[{}]", self.k, self.base.name())
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn robustness(&self) -> f64 {
        0.0
    }

    fn spec(&self, eps: f64) -> Result<SchemeSpec> {
        check_eps(eps)?;
        let b = self.base.spec(Self::base_eps(eps))?;
        let wf = BitField {
            width: self.weight_bits(eps),
            cardinality: self.weight_grid(eps)?.count,
        };
        let mut layout = MessageLayout {
            fields: vec![wf; self.k],
        };
        for _ in 0..self.k {
            layout.extend(&b.layout);
        }
        let k = self.k as f64;
        let rounds = ceil_ratio(48.0 * k * (6.0 * k).ln(), eps) as usize;
        Ok(SchemeSpec {
            name: self.name(),
            eps,
            tau: self.k * b.tau,
            t_bits: layout.total_bits(),
            m_samples: rounds * b.m_samples,
            robustness: 0.0,
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
        let mix = truth
            .as_mixture()
            .filter(|m| m.k() == self.k && m.dim() == self.dim())
            .ok_or_else(|| Error::invalid(format!("expected a {}-component mixture in dimension {}", self.k, self.dim())))?;
        let labels = sample
            .labels
            .as_ref()
            .ok_or_else(|| Error::invalid("mixture encoding needs component labels"))?;
        let spec = self.spec(eps)?;
        if sample.len() < spec.m_samples {
            return Err(Error::SampleTooShort {
                needed: spec.m_samples,
                got: sample.len(),
            });
        }
        let be = Self::base_eps(eps);
        let b = self.base.spec(be)?;
        let wgrid = self.weight_grid(eps)?;
        let mut refs = Vec::with_capacity(spec.tau);
        let mut bits = Vec::with_capacity(spec.t_bits);
        let mut widx = Vec::with_capacity(self.k);
        let mut comp_bits = Vec::with_capacity(self.k * b.t_bits);
        for (i, (&w, comp)) in mix.weights().iter().zip(mix.components()).enumerate() {
            widx.push(wgrid.nearest(w));
            if w <= self.negligible_weight(eps) {
                refs.extend(std::iter::repeat(0).take(b.tau));
                comp_bits.extend(std::iter::repeat(false).take(b.t_bits));
                continue;
            }
            let own: Vec<usize> = (0..spec.m_samples).filter(|&j| labels[j] == i).collect();
            if own.len() < b.m_samples {
                return Ok(EncodeOutcome::Failed(format!("component {i}: {} points, need {}", own.len(), b.m_samples)));
            }
            let target: Distribution = comp.clone().into();
            let mut done = false;
            for chunk in own.chunks_exact(b.m_samples).take(self.blocks()) {
                let local = LabeledSample::unlabeled(chunk.iter().map(|&j| sample.points[j].clone()).collect());
                if let EncodeOutcome::Ok(msg) = self.base.encode(&target, &local, be, rng)? {
                    refs.extend(msg.sample_refs.iter().map(|&r| chunk[r as usize] as u32));
                    comp_bits.extend(msg.bits);
                    done = true;
                    break;
                }
            }
            if !done {
                return Ok(EncodeOutcome::Failed(format!("component {i}: every block failed")));
            }
        }
        let weight_layout = MessageLayout {
            fields: spec.layout.fields[..self.k].to_vec(),
        };
        bits.extend(weight_layout.pack(&widx)?);
        bits.extend(comp_bits);
        Ok(EncodeOutcome::Ok(CompressionMessage::for_spec(refs, bits, &spec)?))
    }

    fn decode(&self, msg: &CompressionMessage, points: &[DVector<f64>], eps: f64) -> Result<Distribution> {
        let spec = self.spec(eps)?;
        msg.check_shape(&spec)?;
        let be = Self::base_eps(eps);
        let b = self.base.spec(be)?;
        let wgrid = self.weight_grid(eps)?;
        let weight_layout = MessageLayout {
            fields: spec.layout.fields[..self.k].to_vec(),
        };
        let wbits = weight_layout.total_bits();
        let weights: Vec<f64> = weight_layout
            .unpack(&msg.bits[..wbits])?
            .into_iter()
            .map(|i| wgrid.value(i))
            .collect();
        let pts = msg.referenced(points)?;
        let d = self.dim();
        let mut comps = Vec::with_capacity(self.k);
        for i in 0..self.k {
            let local: Vec<DVector<f64>> = pts[i * b.tau..(i + 1) * b.tau].iter().map(|p| (*p).clone()).collect();
            let sub = CompressionMessage {
                sample_refs: (0..b.tau as u32).collect(),
                bits: msg.bits[wbits + i * b.t_bits..wbits + (i + 1) * b.t_bits].to_vec(),
            };
            let g = match self.base.decode(&sub, &local, be) {
                Ok(Distribution::Gaussian(g)) => g,
                Ok(Distribution::Mixture(_)) => return Err(Error::invalid("mixture base decoded a mixture")),
                Err(Error::NotPositiveDefinite { .. } | Error::NonFinite(_)) => Gaussian::standard(d),
                Err(e) => return Err(e),
            };
            comps.push(g);
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::InvalidMixture("decoded weights sum to zero".into()));
        }
        Ok(Mixture::normalized(weights, comps)?.into())
    }
}
