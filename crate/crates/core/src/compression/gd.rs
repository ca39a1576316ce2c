//! Robust scheme for `d`-dimensional Gaussians.
//!
//! Write `Σ = Σⱼ vⱼvⱼᵀ` with `vⱼ = √λⱼ·eⱼ` along the eigenvectors, so `Ψ⁻¹vⱼ = eⱼ`. The
//! whitened pair differences `Yᵢ = Ψ⁻¹(X₂ᵢ₊₁ − X₂ᵢ)/√2` are close to standard normal, and
//! with high probability their symmetric hull contains `B₂/C`. Then each `eⱼ/C` is a
//! combination `Σθⱼᵢ Yᵢ` with `|θ| ≤ 1`, and un-whitening gives
//! `vⱼ = (C/√2) Σ θⱼᵢ (X₂ᵢ₊₁ − X₂ᵢ)`, which the decoder can evaluate from the referenced
//! points and the quantized `θ`. The mean is sent as eigen-coordinates of `Ψ⁻¹(X − μ)`
//! for a referenced point `X`.

use nalgebra::{DMatrix, DVector};

use super::{check_eps, BitField, CompressionMessage, CompressionScheme, EncodeOutcome, MessageLayout, SchemeId, SchemeSpec};
use crate::error::{Error, Result};
use crate::gaussmodels::{Distribution, Gaussian, LabeledSample};
use crate::nets::{hull_sample_size, solve_hull_coefficients, BallGrid, UniformGrid, HULL_C, HULL_M_MULTIPLIER};
use crate::rng::SeededRng;

const RIDGE: f64 = 1e-10;

#[derive(Clone, Copy, Debug)]
pub struct GdScheme {
    pub d: usize,
    /// Multiplier `C₀` in `m = ⌈C₀·d(1 + ln d)⌉`.
    pub c0: f64,
    /// Hull constant `C`.
    pub hull_c: f64,
}

/// Intermediate quantities of one encoding, for audits.
#[derive(Clone, Debug)]
pub struct GdDiagnostics {
    pub v: Vec<DVector<f64>>,
    pub v_hat: Vec<DVector<f64>>,
    /// `vⱼ` rebuilt from the unquantized coefficients.
    pub v_unquantized: Vec<DVector<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub theta_hat: Vec<Vec<f64>>,
    pub lambda: DVector<f64>,
    pub lambda_hat: DVector<f64>,
    pub mu_hat: DVector<f64>,
    /// Number of pair differences passing the `4√d` norm filter.
    pub kept: usize,
    /// `‖Ψ⁻¹(v̂ⱼ − vⱼ)‖` per `j`.
    pub v_errors: Vec<f64>,
    /// `‖Ψ⁻¹(μ̂ − μ)‖`.
    pub mu_error: f64,
}

impl GdScheme {
    pub fn new(d: usize) -> Result<Self> {
        Self::with_constants(d, HULL_M_MULTIPLIER, HULL_C)
    }

    pub fn with_constants(d: usize, c0: f64, hull_c: f64) -> Result<Self> {
        if d == 0 || !(c0 > 0.0) || !(hull_c > 0.0) {
            return Err(Error::invalid("gd scheme needs d ≥ 1 and positive constants"));
        }
        Ok(Self { d, c0, hull_c })
    }

    /// Number of difference pairs `m`.
    pub fn pairs(&self) -> usize {
        hull_sample_size(self.d, self.c0)
    }

    /// Coefficient grid of ℓ∞ radius `ε/(96·C·m·d³)` on `[−1, 1]`, with 0 on the grid.
    pub fn theta_grid(&self, eps: f64) -> Result<UniformGrid> {
        let d3 = (self.d as f64).powi(3);
        let radius = eps / (96.0 * self.hull_c * self.pairs() as f64 * d3);
        UniformGrid::symmetric(1.0, 2.0 * radius)
    }

    /// `(ε/3d)`-net of the `4√d` ball for the mean coordinates.
    pub fn lambda_grid(&self, eps: f64) -> Result<BallGrid> {
        BallGrid::new(self.d, eps / (3.0 * self.d as f64), 4.0 * (self.d as f64).sqrt())
    }

    fn combine(&self, theta: &[f64], pts: &[&DVector<f64>]) -> DVector<f64> {
        let mut v = DVector::zeros(self.d);
        for (i, &t) in theta.iter().enumerate() {
            if t != 0.0 {
                v += (pts[2 * i + 1] - pts[2 * i]) * t;
            }
        }
        v * (self.hull_c / std::f64::consts::SQRT_2)
    }

    /// Encodes `g` from the first `2m` points and reports the intermediate quantities.
    /// The inner `Err` carries the reason for a probabilistic failure.
    pub fn encode_detailed(
        &self,
        g: &Gaussian,
        points: &[DVector<f64>],
        eps: f64,
    ) -> Result<std::result::Result<(CompressionMessage, GdDiagnostics), String>> {
        let d = self.d;
        if g.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: g.dim(),
            });
        }
        let spec = self.spec(eps)?;
        let m = self.pairs();
        if points.len() < 2 * m {
            return Err(Error::SampleTooShort {
                needed: 2 * m,
                got: points.len(),
            });
        }
        let cap = 4.0 * (d as f64).sqrt();
        let psi_inv = g.inv_sqrt_cov();
        let mut kept = Vec::new();
        let mut ys = Vec::new();
        for i in 0..m {
            let y = psi_inv * (&points[2 * i + 1] - &points[2 * i]) / std::f64::consts::SQRT_2;
            if y.norm() <= cap {
                kept.push(i);
                ys.push(y);
            }
        }
        if ys.is_empty() {
            return Ok(Err("no difference passes the norm filter".into()));
        }
        let eig = g.eigen();
        let tgrid = self.theta_grid(eps)?;
        let refs_pts: Vec<&DVector<f64>> = points[..2 * m].iter().collect();
        let (mut theta, mut theta_hat) = (Vec::with_capacity(d), Vec::with_capacity(d));
        let (mut v, mut v_hat, mut v_raw) = (Vec::new(), Vec::new(), Vec::new());
        let mut fields = Vec::with_capacity(d * m + d);
        for j in 0..d {
            let e = eig.eigenvectors.column(j).into_owned();
            let target = &e / self.hull_c;
            let coeffs = match solve_hull_coefficients(&ys, &target) {
                Ok(c) => c,
                Err(Error::Infeasible { min_linf }) => {
                    return Ok(Err(format!("direction {j} outside the difference hull (min ‖θ‖∞ = {min_linf:.3})")))
                }
                Err(e) => return Err(e),
            };
            let mut full = vec![0.0; m];
            for (&i, &c) in kept.iter().zip(&coeffs) {
                full[i] = c;
            }
            let mut q = vec![0.0; m];
            for i in 0..m {
                let (idx, val) = tgrid.quantize(full[i]);
                fields.push(idx);
                q[i] = val;
            }
            v.push(e * eig.eigenvalues[j].sqrt());
            v_raw.push(self.combine(&full, &refs_pts));
            v_hat.push(self.combine(&q, &refs_pts));
            theta.push(full);
            theta_hat.push(q);
        }
        let Some(x_idx) = (0..2).find(|&i| (psi_inv * (&points[i] - g.mean())).norm() <= cap) else {
            return Ok(Err("both anchor points are too far from the mean".into()));
        };
        let z = psi_inv * (&points[x_idx] - g.mean());
        let lambda = eig.eigenvectors.transpose() * &z;
        let (lidx, lambda_hat) = self.lambda_grid(eps)?.quantize(&lambda)?;
        fields.extend(lidx);
        let mu_hat = mean_from(&points[x_idx], &lambda_hat, &v_hat);
        let bits = spec.layout.pack(&fields)?;
        let mut refs = Vec::with_capacity(2 * m + 1);
        refs.push(x_idx as u32);
        refs.extend(0..2 * m as u32);
        let msg = CompressionMessage::for_spec(refs, bits, &spec)?;
        let v_errors = v.iter().zip(&v_hat).map(|(a, b)| (psi_inv * (b - a)).norm()).collect();
        let mu_error = (psi_inv * (&mu_hat - g.mean())).norm();
        Ok(Ok((msg, GdDiagnostics {
            v,
            v_hat,
            v_unquantized: v_raw,
            theta,
            theta_hat,
            lambda,
            lambda_hat,
            mu_hat,
            kept: kept.len(),
            v_errors,
            mu_error,
        })))
    }
}

fn mean_from(x: &DVector<f64>, lambda_hat: &DVector<f64>, v_hat: &[DVector<f64>]) -> DVector<f64> {
    let mut mu = x.clone();
    for (l, v) in lambda_hat.iter().zip(v_hat) {
        mu -= v * *l;
    }
    mu
}

impl CompressionScheme for GdScheme {
    fn id(&self) -> SchemeId {
        SchemeId::Gd
    }

    fn name(&self) -> String {
        format!("gd{}", self.d)
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn robustness(&self) -> f64 {
        2.0 / 3.0
    }

    fn spec(&self, eps: f64) -> Result<SchemeSpec> {
        check_eps(eps)?;
        let m = self.pairs();
        let theta = BitField::for_cardinality(self.theta_grid(eps)?.count);
        let lam = BitField::for_cardinality(self.lambda_grid(eps)?.axis.count);
        let mut fields = vec![theta; self.d * m];
        fields.extend(std::iter::repeat(lam).take(self.d));
        let layout = MessageLayout { fields };
        Ok(SchemeSpec {
            name: self.name(),
            eps,
            tau: 2 * m + 1,
            t_bits: layout.total_bits(),
            m_samples: 2 * m,
            robustness: self.robustness(),
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
            .ok_or_else(|| Error::invalid("gd encodes single Gaussians"))?;
        Ok(match self.encode_detailed(g, &sample.points, eps)? {
            Ok((msg, _)) => EncodeOutcome::Ok(msg),
            Err(why) => EncodeOutcome::Failed(why),
        })
    }

    fn decode(&self, msg: &CompressionMessage, points: &[DVector<f64>], eps: f64) -> Result<Distribution> {
        let spec = self.spec(eps)?;
        msg.check_shape(&spec)?;
        let (d, m) = (self.d, self.pairs());
        let values = spec.layout.unpack(&msg.bits)?;
        let pts = msg.referenced(points)?;
        if let Some(p) = pts.iter().find(|p| p.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
        let tgrid = self.theta_grid(eps)?;
        let pair_pts = &pts[1..];
        let v_hat: Vec<DVector<f64>> = (0..d)
            .map(|j| {
                let theta: Vec<f64> = values[j * m..(j + 1) * m].iter().map(|&i| tgrid.value(i)).collect();
                self.combine(&theta, pair_pts)
            })
            .collect();
        let lambda_hat = self.lambda_grid(eps)?.reconstruct(&values[d * m..])?;
        let mu_hat = mean_from(pts[0], &lambda_hat, &v_hat);
        let mut cov = DMatrix::zeros(d, d);
        for v in &v_hat {
            cov += v * v.transpose();
        }
        cov = 0.5 * (&cov + cov.transpose());
        match Gaussian::new(mu_hat.clone(), cov.clone()) {
            Ok(g) => Ok(g.into()),
            Err(Error::NotPositiveDefinite { .. }) => {
                let ridge = RIDGE * (cov.trace() / d as f64).max(f64::MIN_POSITIVE);
                Ok(Gaussian::new(mu_hat, cov + DMatrix::identity(d, d) * ridge)?.into())
            }
            Err(e) => Err(e),
        }
    }
}
