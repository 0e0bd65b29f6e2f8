//! Debiasing for small sequence classifiers by decorrelating the learned
//! representation and purifying it with salient local features.
//!
//! The pipeline has two halves that train together:
//!
//! * **Decorrelation.** Each coordinate of the sentence representation `Z` is
//!   lifted with random Fourier features ([`rff`]). The squared Frobenius norm
//!   of the weighted cross-covariance between every pair of lifted coordinates
//!   ([`independence`]) is minimized over a global table of per-sample weights
//!   constrained to `{w > 0, sum(w) = n}` ([`reweight`]). The realized weights
//!   scale the per-sample cross-entropy of the classifier.
//! * **Purification.** The gradient norm of the loss with respect to each
//!   slot embedding ranks the slots ([`purify`]). The top fraction is kept and
//!   an InfoNCE lower bound on the mutual information between each kept slot
//!   and `Z` is maximized alongside the classification loss ([`model`]).
//!
//! [`netcore`] is the reverse-mode differentiation substrate, [`data`] builds
//! synthetic tasks with a controllable spurious token, and [`harness`] runs
//! training, ablations, sweeps and the decorrelation study.

pub mod data;
pub mod error;
pub mod harness;
pub mod independence;
pub mod model;
pub mod netcore;
pub mod purify;
pub mod reweight;
pub mod rff;

pub use error::{Error, Result};
