//! Sample-compression density estimation for Gaussians and Gaussian mixtures.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compression;
pub mod distances;
pub mod error;
pub mod gaussmodels;
pub mod harness;
pub mod learners;
pub mod linalg;
pub mod lowerbound;
pub mod nets;
pub mod rng;

pub use error::{Error, Result};
pub use gaussmodels::{Distribution, Gaussian, LabeledSample, Mixture};
pub use rng::{derive_seed, rng_from_seed, trial_seed, SeededRng};
