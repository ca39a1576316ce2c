//! Learning from a compression scheme: decode candidate messages over a compression
//! sample, then pick one with a Scheffé tournament on a fresh holdout.
//!
//! The candidate set is every message (reference tuple × field values) when that fits in
//! the budget. Otherwise it is a uniform random subset of budget size, and the result is
//! flagged `budget_capped`: the selection guarantee then only covers the subset.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use super::selection::{holdout_size, select_candidate_with, CandidateSet, SelectionConfig, SelectionResult};
use crate::compression::{CompressionMessage, CompressionScheme, G1dScheme, GdScheme, MixtureScheme, SchemeSpec, SharedScheme};
use crate::error::{Error, Result};
use crate::gaussmodels::{Distribution, LabeledSample, Mixture};
use crate::rng::{derive_seed, rng_from_seed};

/// Tournament size used by [`LearnOptions::new`].
pub const DEFAULT_SHORTLIST: usize = 128;

#[derive(Clone, Debug)]
pub struct LearnOptions {
    /// Maximum number of messages decoded, including the oracle message.
    pub budget: usize,
    pub seed: u64,
    pub selection: SelectionConfig,
    /// Test hook: when set, the encoder runs on this target and its message joins the
    /// candidates.
    pub oracle: Option<Distribution>,
}

impl LearnOptions {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self {
            budget,
            seed,
            selection: SelectionConfig {
                shortlist: Some(DEFAULT_SHORTLIST),
                ..Default::default()
            },
            oracle: None,
        }
    }

    pub fn with_oracle(mut self, truth: Distribution) -> Self {
        self.oracle = Some(truth);
        self
    }
}

/// How a learner splits its sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleSplit {
    /// Points per compression block, `m(ε')`.
    pub block: usize,
    pub blocks: usize,
    /// Minimum holdout size.
    pub holdout: usize,
}

impl SampleSplit {
    pub fn compression(&self) -> usize {
        self.block * self.blocks
    }

    pub fn total(&self) -> usize {
        self.compression() + self.holdout
    }
}

#[derive(Clone, Debug)]
pub struct LearnResult {
    pub estimate: Distribution,
    /// Size of the full message space `|H|` (saturating).
    pub candidate_count: u128,
    /// Messages decoded.
    pub evaluated: usize,
    /// Candidates that decoded successfully and entered selection.
    pub decoded: usize,
    pub budget_capped: bool,
    /// Position of the oracle candidate, when the hook produced one.
    pub oracle_index: Option<usize>,
    pub winner: String,
    pub selection: SelectionResult,
}

/// Accuracies used by a learner: the scheme's, and the tournament's.
#[derive(Clone, Copy, Debug)]
struct Accuracy {
    scheme: f64,
    select: f64,
}

/// `⌈log₃(2/δ)⌉`, at least 1.
fn block_count(delta: f64) -> usize {
    ((2.0 / delta).ln() / 3f64.ln()).ceil().max(1.0) as usize
}

fn check_inputs(eps: f64, delta: f64, opts: &LearnOptions) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("need eps, delta in (0, 1); got {eps}, {delta}")));
    }
    if opts.budget < 1 {
        return Err(Error::invalid("budget must be at least 1"));
    }
    Ok(())
}

fn split_for(spec: &SchemeSpec, acc: Accuracy, delta: f64, opts: &LearnOptions) -> SampleSplit {
    let entrants = match opts.selection.shortlist {
        Some(s) => opts.budget.min(s.max(1)),
        None => opts.budget,
    };
    SampleSplit {
        block: spec.m_samples,
        blocks: block_count(delta),
        holdout: holdout_size(entrants, acc.select, delta / 3.0),
    }
}

fn learn_accuracy(eps: f64) -> Accuracy {
    // Candidates within ε/6 in L1 and tournament slack ε/8 give 3·ε/6 + 4·ε/8 = ε.
    Accuracy {
        scheme: eps / 6.0,
        select: eps / 8.0,
    }
}

fn agnostic_accuracy(eps: f64) -> Accuracy {
    // Components at ε/10 (the mixture scheme runs its base at a third of its own ε).
    Accuracy {
        scheme: 0.3 * eps,
        select: eps / 40.0,
    }
}

/// Sample sizes [`learn_from_compression`] requires.
pub fn learn_sample_split(scheme: &dyn CompressionScheme, eps: f64, delta: f64, opts: &LearnOptions) -> Result<SampleSplit> {
    check_inputs(eps, delta, opts)?;
    let acc = learn_accuracy(eps);
    Ok(split_for(&scheme.spec(acc.scheme)?, acc, delta, opts))
}

/// Sample sizes [`learn_mixture_agnostic`] requires.
pub fn agnostic_sample_split(d: usize, k: usize, eps: f64, delta: f64, opts: &LearnOptions) -> Result<SampleSplit> {
    check_inputs(eps, delta, opts)?;
    let acc = agnostic_accuracy(eps);
    Ok(split_for(&mixture_scheme(d, k)?.spec(acc.scheme)?, acc, delta, opts))
}

fn mixture_scheme(d: usize, k: usize) -> Result<MixtureScheme> {
    let base: SharedScheme = if d == 1 {
        Arc::new(G1dScheme::default())
    } else {
        Arc::new(GdScheme::new(d)?)
    };
    MixtureScheme::new(base, k)
}

/// Learns from `sample` through `scheme`. The first `m(ε/6)·⌈log₃(2/δ)⌉` points form the
/// compression sample and the rest the holdout.
pub fn learn_from_compression(
    scheme: &dyn CompressionScheme,
    sample: &LabeledSample,
    eps: f64,
    delta: f64,
    opts: &LearnOptions,
) -> Result<LearnResult> {
    check_inputs(eps, delta, opts)?;
    learn_with(scheme, sample, learn_accuracy(eps), delta, opts, |t| Ok(t.clone()))
}

/// Learns a `k`-mixture from a labeled sample, with components compressed by the
/// one-dimensional scheme when `d = 1` and the `d`-dimensional one otherwise.
pub fn learn_mixture_agnostic(
    sample: &LabeledSample,
    k: usize,
    eps: f64,
    delta: f64,
    opts: &LearnOptions,
) -> Result<LearnResult> {
    check_inputs(eps, delta, opts)?;
    let d = sample.dim().ok_or(Error::Empty("sample"))?;
    let scheme = mixture_scheme(d, k)?;
    learn_with(&scheme, sample, agnostic_accuracy(eps), delta, opts, |t| match t {
        Distribution::Gaussian(g) if k == 1 => Ok(Mixture::new(vec![1.0], vec![g.clone()])?.into()),
        other => Ok(other.clone()),
    })
}

fn learn_with(
    scheme: &dyn CompressionScheme,
    sample: &LabeledSample,
    acc: Accuracy,
    delta: f64,
    opts: &LearnOptions,
    oracle_target: impl Fn(&Distribution) -> Result<Distribution>,
) -> Result<LearnResult> {
    let spec = scheme.spec(acc.scheme)?;
    let split = split_for(&spec, acc, delta, opts);
    if sample.len() < split.total() {
        return Err(Error::SampleTooShort {
            needed: split.total(),
            got: sample.len(),
        });
    }
    let m0 = split.compression();
    let points = &sample.points[..m0];
    let holdout = &sample.points[m0..];
    let total = spec.message_count(m0);
    let mut rng = rng_from_seed(derive_seed(opts.seed, 0));

    let oracle_msg = match &opts.oracle {
        Some(t) => {
            let target = oracle_target(t)?;
            let mut found = None;
            for b in 0..split.blocks {
                let (_, rest) = sample.split_at(b * split.block);
                let (blk, _) = rest.split_at(split.block);
                if let Some(msg) = scheme.encode(&target, &blk, acc.scheme, &mut rng)?.into_message() {
                    let shift = (b * split.block) as u32;
                    found = Some(CompressionMessage {
                        sample_refs: msg.sample_refs.iter().map(|r| r + shift).collect(),
                        bits: msg.bits,
                    });
                    break;
                }
            }
            found
        }
        None => None,
    };

    let n_random = opts.budget - usize::from(oracle_msg.is_some());
    let budget_capped = total > n_random as u128;
    let messages: Vec<(Vec<u32>, Vec<u64>)> = if budget_capped {
        random_messages(&spec, m0, n_random, &mut rng)
    } else {
        (0..total).map(|i| message_at(&spec, m0, i)).collect()
    };

    let decoded: Vec<Option<Distribution>> = messages
        .par_iter()
        .map(|(refs, values)| {
            let bits = spec.layout.pack(values).ok()?;
            let msg = CompressionMessage {
                sample_refs: refs.clone(),
                bits,
            };
            scheme.decode(&msg, points, acc.scheme).ok()
        })
        .collect();

    let mut cands = Vec::new();
    let mut prov = Vec::new();
    let mut oracle_index = None;
    if let Some(msg) = &oracle_msg {
        if let Ok(dist) = scheme.decode(msg, points, acc.scheme) {
            oracle_index = Some(0);
            cands.push(dist);
            prov.push(format!("oracle refs={:?}", msg.sample_refs));
        }
    }
    for ((refs, values), dist) in messages.iter().zip(decoded) {
        if let Some(dist) = dist {
            cands.push(dist);
            prov.push(format!("refs={refs:?} fields={values:?}"));
        }
    }
    let n_cands = cands.len();
    let set = CandidateSet::new(cands, prov).map_err(|_| Error::EmptyCandidates)?;
    let selection = select_candidate_with(&set, holdout, &opts.selection, derive_seed(opts.seed, 1))?;
    Ok(LearnResult {
        estimate: set.candidates[selection.index].clone(),
        winner: set.provenance[selection.index].clone(),
        candidate_count: total,
        evaluated: messages.len() + usize::from(oracle_msg.is_some()),
        decoded: n_cands,
        budget_capped,
        oracle_index,
        selection,
    })
}

/// Message number `i`: reference digits in base `m0` first, then the field values.
fn message_at(spec: &SchemeSpec, m0: usize, mut i: u128) -> (Vec<u32>, Vec<u64>) {
    let mut refs = Vec::with_capacity(spec.tau);
    for _ in 0..spec.tau {
        refs.push((i % m0 as u128) as u32);
        i /= m0 as u128;
    }
    (refs, spec.layout.values_at(i))
}

/// Up to `n` distinct messages drawn uniformly, in sorted order.
fn random_messages(spec: &SchemeSpec, m0: usize, n: usize, rng: &mut impl Rng) -> Vec<(Vec<u32>, Vec<u64>)> {
    let mut set = BTreeSet::new();
    let mut attempts = 0;
    while set.len() < n && attempts < 10 * n + 100 {
        attempts += 1;
        let refs: Vec<u32> = (0..spec.tau).map(|_| rng.random_range(0..m0 as u32)).collect();
        let values: Vec<u64> = spec.layout.fields.iter().map(|f| rng.random_range(0..f.cardinality)).collect();
        set.insert((refs, values));
    }
    set.into_iter().collect()
}
