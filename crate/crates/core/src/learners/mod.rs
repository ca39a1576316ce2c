//! Learners: Scheffé selection among finitely many candidates, learning through a
//! compression scheme, a direct single-Gaussian estimator and the mixture learner.

mod efficient;
mod reduction;
mod selection;

pub use efficient::{efficient_sample_size, learn_gaussian_efficient, EFFICIENT_C};
pub use reduction::{
    agnostic_sample_split, learn_from_compression, learn_mixture_agnostic, learn_sample_split, LearnOptions, LearnResult,
    SampleSplit, DEFAULT_SHORTLIST,
};
pub use selection::{
    holdout_size, scheffe_probs_1d, select_candidate, select_candidate_with, CandidateSet, SelectionConfig,
    SelectionResult, DEFAULT_N_SCHEFFE,
};
