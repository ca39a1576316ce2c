//! Compression schemes: an encoder that knows the target picks a few sample points and a
//! short bit string, and a fixed decoder rebuilds an approximation from them.
//!
//! Accuracy `eps` is measured in L1 throughout this module (so TV error ≤ `eps/2`
//! whenever the L1 guarantee holds), and robustness `r` is the L1 radius of admissible
//! contamination.

mod g1d;
mod g1d_robust;
mod gd;
mod mixture;
mod product;

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussmodels::{Distribution, LabeledSample};
use crate::rng::SeededRng;

pub use g1d::{G1dScheme, G1D_C_HI, G1D_C_LO};
pub use g1d_robust::{decode_g1d_robust, G1dRobustScheme, RobustPick, G1D_ROBUST_M_CONST};
pub use gd::{GdDiagnostics, GdScheme};
pub use mixture::{mixture_error_budget, MixtureErrorBudget, MixtureScheme};
pub use product::ProductScheme;

/// Numeric identifier written at the head of every serialized message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u16)]
pub enum SchemeId {
    G1d = 1,
    G1dRobust = 2,
    Gd = 3,
    Product = 4,
    Mixture = 5,
}

impl SchemeId {
    pub fn from_u16(v: u16) -> Result<Self> {
        Ok(match v {
            1 => SchemeId::G1d,
            2 => SchemeId::G1dRobust,
            3 => SchemeId::Gd,
            4 => SchemeId::Product,
            5 => SchemeId::Mixture,
            other => return Err(Error::MalformedMessage(format!("unknown scheme id {other}"))),
        })
    }
}

/// The encoder→decoder payload: indices into the presented sample (repeats allowed) and
/// a bit string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressionMessage {
    pub sample_refs: Vec<u32>,
    pub bits: Vec<bool>,
}

impl CompressionMessage {
    /// Builds a message, failing if it exceeds `(max_refs, max_bits)`.
    pub fn new(sample_refs: Vec<u32>, bits: Vec<bool>, max_refs: usize, max_bits: usize) -> Result<Self> {
        if sample_refs.len() > max_refs || bits.len() > max_bits {
            return Err(Error::MessageTooLarge {
                refs: sample_refs.len(),
                max_refs,
                bits: bits.len(),
                max_bits,
            });
        }
        Ok(Self { sample_refs, bits })
    }

    /// Builds a message that must match `spec` exactly.
    pub fn for_spec(sample_refs: Vec<u32>, bits: Vec<bool>, spec: &SchemeSpec) -> Result<Self> {
        let msg = Self::new(sample_refs, bits, spec.tau, spec.t_bits)?;
        msg.check_shape(spec)?;
        Ok(msg)
    }

    pub fn check_shape(&self, spec: &SchemeSpec) -> Result<()> {
        if self.sample_refs.len() != spec.tau || self.bits.len() != spec.t_bits {
            return Err(Error::MalformedMessage(format!(
                "{} refs and {} bits, scheme `{}` expects {} and {}",
                self.sample_refs.len(),
                self.bits.len(),
                spec.name,
                spec.tau,
                spec.t_bits
            )));
        }
        Ok(())
    }

    /// Points referenced by the message, in message order.
    pub fn referenced<'a>(&self, points: &'a [DVector<f64>]) -> Result<Vec<&'a DVector<f64>>> {
        self.sample_refs
            .iter()
            .map(|&r| {
                points.get(r as usize).ok_or_else(|| {
                    Error::MalformedMessage(format!("reference {r} beyond sample of size {}", points.len()))
                })
            })
            .collect()
    }

    /// `[u16 scheme-id][u32 n_refs][u32 refs…][u32 n_bits][packed bits, LSB-first]`,
    /// all little-endian.
    pub fn to_bytes(&self, scheme: SchemeId) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + 4 * self.sample_refs.len() + self.bits.len().div_ceil(8));
        out.extend_from_slice(&(scheme as u16).to_le_bytes());
        out.extend_from_slice(&(self.sample_refs.len() as u32).to_le_bytes());
        for r in &self.sample_refs {
            out.extend_from_slice(&r.to_le_bytes());
        }
        out.extend_from_slice(&(self.bits.len() as u32).to_le_bytes());
        let mut byte = 0u8;
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                byte |= 1 << (i % 8);
            }
            if i % 8 == 7 {
                out.push(byte);
                byte = 0;
            }
        }
        if self.bits.len() % 8 != 0 {
            out.push(byte);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(SchemeId, Self)> {
        let mut cur = Cursor { bytes, pos: 0 };
        let id = SchemeId::from_u16(u16::from_le_bytes(cur.take::<2>()?))?;
        let n_refs = u32::from_le_bytes(cur.take::<4>()?) as usize;
        if n_refs > bytes.len() / 4 {
            return Err(Error::MalformedMessage(format!("{n_refs} refs cannot fit")));
        }
        let refs = (0..n_refs)
            .map(|_| cur.take::<4>().map(u32::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        let n_bits = u32::from_le_bytes(cur.take::<4>()?) as usize;
        let packed = &bytes[cur.pos..];
        if packed.len() != n_bits.div_ceil(8) {
            return Err(Error::MalformedMessage(format!(
                "{} payload bytes for {n_bits} bits",
                packed.len()
            )));
        }
        let bits: Vec<bool> = (0..n_bits).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect();
        if n_bits % 8 != 0 && packed[n_bits / 8] >> (n_bits % 8) != 0 {
            return Err(Error::MalformedMessage("nonzero padding bits".into()));
        }
        Ok((id, Self {
            sample_refs: refs,
            bits,
        }))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::MalformedMessage("truncated message".into()))?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }
}

/// One fixed-width field of a message's bit string. Values range over `0..cardinality`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitField {
    pub width: u32,
    pub cardinality: u64,
}

impl BitField {
    /// A field of minimal width for `cardinality` values.
    pub fn for_cardinality(cardinality: u64) -> Self {
        Self {
            width: crate::nets::bits_for(cardinality),
            cardinality,
        }
    }
}

/// The sequence of fields making up a scheme's bit string.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageLayout {
    pub fields: Vec<BitField>,
}

impl MessageLayout {
    pub fn total_bits(&self) -> usize {
        self.fields.iter().map(|f| f.width as usize).sum()
    }

    /// Number of distinct valid bit strings, saturating at `u128::MAX`.
    pub fn value_count(&self) -> u128 {
        self.fields
            .iter()
            .fold(1u128, |acc, f| acc.saturating_mul(f.cardinality as u128))
    }

    pub fn extend(&mut self, other: &MessageLayout) {
        self.fields.extend_from_slice(&other.fields);
    }

    /// Writes each value LSB-first into its field.
    pub fn pack(&self, values: &[u64]) -> Result<Vec<bool>> {
        if values.len() != self.fields.len() {
            return Err(Error::invalid(format!(
                "{} values for {} fields",
                values.len(),
                self.fields.len()
            )));
        }
        let mut bits = Vec::with_capacity(self.total_bits());
        for (f, &v) in self.fields.iter().zip(values) {
            if v >= f.cardinality {
                return Err(Error::invalid(format!("value {v} ≥ field cardinality {}", f.cardinality)));
            }
            for b in 0..f.width {
                bits.push(v >> b & 1 == 1);
            }
        }
        Ok(bits)
    }

    pub fn unpack(&self, bits: &[bool]) -> Result<Vec<u64>> {
        if bits.len() != self.total_bits() {
            return Err(Error::MalformedMessage(format!(
                "{} bits, layout has {}",
                bits.len(),
                self.total_bits()
            )));
        }
        let mut out = Vec::with_capacity(self.fields.len());
        let mut pos = 0;
        for f in &self.fields {
            let mut v = 0u64;
            for b in 0..f.width as usize {
                if bits[pos + b] {
                    v |= 1 << b;
                }
            }
            pos += f.width as usize;
            if v >= f.cardinality {
                return Err(Error::MalformedMessage(format!(
                    "field value {v} ≥ cardinality {}",
                    f.cardinality
                )));
            }
            out.push(v);
        }
        Ok(out)
    }

    /// Field values of the `index`-th bit string in mixed-radix order (first field fastest).
    pub fn values_at(&self, mut index: u128) -> Vec<u64> {
        self.fields
            .iter()
            .map(|f| {
                let c = f.cardinality as u128;
                let v = index % c;
                index /= c;
                v as u64
            })
            .collect()
    }
}

/// Sizes of a scheme at one accuracy: `(τ(ε), t(ε), m(ε))`, robustness `r` and the bit layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub name: String,
    pub eps: f64,
    pub tau: usize,
    pub t_bits: usize,
    pub m_samples: usize,
    pub robustness: f64,
    pub layout: MessageLayout,
}

impl SchemeSpec {
    /// `m₀^τ · Π cardinalities`: the number of messages a learner must consider for a
    /// compression sample of size `m0`. Saturates at `u128::MAX`.
    pub fn message_count(&self, m0: usize) -> u128 {
        let refs = (0..self.tau).fold(1u128, |acc, _| acc.saturating_mul(m0 as u128));
        refs.saturating_mul(self.layout.value_count())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EncodeOutcome {
    Ok(CompressionMessage),
    Failed(String),
}

impl EncodeOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, EncodeOutcome::Ok(_))
    }

    pub fn message(&self) -> Option<&CompressionMessage> {
        match self {
            EncodeOutcome::Ok(m) => Some(m),
            EncodeOutcome::Failed(_) => None,
        }
    }

    pub fn into_message(self) -> Option<CompressionMessage> {
        match self {
            EncodeOutcome::Ok(m) => Some(m),
            EncodeOutcome::Failed(_) => None,
        }
    }
}

impl fmt::Display for EncodeOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncodeOutcome::Ok(m) => write!(f, "ok ({} refs, {} bits)", m.sample_refs.len(), m.bits.len()),
            EncodeOutcome::Failed(why) => write!(f, "failed: {why}"),
        }
    }
}

/// An encoder/decoder pair with its size functions.
pub trait CompressionScheme: Send + Sync {
    fn id(&self) -> SchemeId;

    fn name(&self) -> String;

    /// Dimension of the distributions handled.
    fn dim(&self) -> usize;

    /// L1 contamination radius tolerated by the encoder.
    fn robustness(&self) -> f64;

    fn spec(&self, eps: f64) -> Result<SchemeSpec>;

    /// Encodes `truth` using points of `sample`. Returns [`EncodeOutcome::Failed`] when
    /// the sample does not admit an accurate message; errors are reserved for invalid input.
    fn encode(
        &self,
        truth: &Distribution,
        sample: &LabeledSample,
        eps: f64,
        rng: &mut SeededRng,
    ) -> Result<EncodeOutcome>;

    /// Deterministic decoder.
    fn decode(&self, msg: &CompressionMessage, points: &[DVector<f64>], eps: f64) -> Result<Distribution>;
}

pub type SharedScheme = Arc<dyn CompressionScheme>;

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// Builds a scheme by CLI name: `g1d`, `g1d_robust`, `gd`, `axis` (product of `g1d`) or
/// `mixture` (mixture of `g1d` for `d = 1`, of `gd` otherwise).
pub fn scheme_by_name(name: &str, d: usize, k: usize) -> Result<SharedScheme> {
    let s: SharedScheme = match name {
        "g1d" => Arc::new(G1dScheme::default()),
        "g1d_robust" => Arc::new(G1dRobustScheme::default()),
        "gd" => Arc::new(GdScheme::new(d)?),
        "axis" | "product" => Arc::new(ProductScheme::new(Arc::new(G1dScheme::default()), d)?),
        "mixture" => {
            let base: SharedScheme = if d == 1 {
                Arc::new(G1dScheme::default())
            } else {
                Arc::new(GdScheme::new(d)?)
            };
            Arc::new(MixtureScheme::new(base, k)?)
        }
        other => return Err(Error::invalid(format!("unknown scheme `{other}`"))),
    };
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format_golden() {
        let msg = CompressionMessage {
            sample_refs: vec![0, 1, 258],
            bits: vec![true, false, true, true, false, false, false, false, true],
        };
        let bytes = msg.to_bytes(SchemeId::G1d);
        let golden: Vec<u8> = vec![
            0x01, 0x00, // scheme id
            0x03, 0x00, 0x00, 0x00, // n_refs
            0x00, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x02, 0x01, 0x00, 0x00, // refs
            0x09, 0x00, 0x00, 0x00, // n_bits
            0b0000_1101, 0b0000_0001, // bits, LSB first
        ];
        assert_eq!(bytes, golden);
        let (id, back) = CompressionMessage::from_bytes(&bytes).unwrap();
        assert_eq!(id, SchemeId::G1d);
        assert_eq!(back, msg);
    }

    #[test]
    fn wire_format_rejects_garbage() {
        assert!(CompressionMessage::from_bytes(&[1, 0, 1]).is_err());
        let mut bytes = CompressionMessage {
            sample_refs: vec![],
            bits: vec![true],
        }
        .to_bytes(SchemeId::Gd);
        *bytes.last_mut().unwrap() |= 0b10;
        assert!(CompressionMessage::from_bytes(&bytes).is_err());
        assert!(CompressionMessage::from_bytes(&[9, 0, 0, 0, 0, 0, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(
            CompressionMessage::new(vec![0; 4], vec![], 3, 10),
            Err(Error::MessageTooLarge { refs: 4, max_refs: 3, .. })
        ));
        assert!(CompressionMessage::new(vec![0; 3], vec![false; 10], 3, 10).is_ok());
    }

    #[test]
    fn layout_round_trip() {
        let layout = MessageLayout {
            fields: vec![BitField::for_cardinality(5), BitField::for_cardinality(1), BitField::for_cardinality(300)],
        };
        assert_eq!(layout.total_bits(), 12); // 3 + 0 + 9
        assert_eq!(layout.value_count(), 1500);
        for idx in [0u128, 7, 1499] {
            let v = layout.values_at(idx);
            let bits = layout.pack(&v).unwrap();
            assert_eq!(layout.unpack(&bits).unwrap(), v);
        }
        let mut bad = layout.pack(&[4, 0, 0]).unwrap();
        bad[0] = true;
        bad[1] = true;
        bad[2] = true;
        assert!(matches!(layout.unpack(&bad), Err(Error::MalformedMessage(_))));
    }
}
