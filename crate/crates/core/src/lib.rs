//! Auditing binary text classifiers for concepts they have falsely learned
//! as globally sufficient for the positive label.
//!
//! Two independent measurements are provided:
//!
//! * a challenge-set measurement ([`sufficiency`]): the exact area under the
//!   accuracy-vs-threshold curve of a two-class challenge set whose examples
//!   all contain the concept, reported as `false_suff = 1 - auc`;
//! * a concept-based measurement that needs no labelled challenge set
//!   ([`cav`], [`tcav`], [`stats`]): concept activation vectors trained in the
//!   classifier's embedding space, scored by direction (`TCAV_dir`) and
//!   magnitude (`TCAV_mag`) of the logit's directional derivative, and
//!   t-tested against random-concept baselines.
//!
//! Models are never run here. Embeddings, logit gradients and probabilities
//! arrive through the line-delimited interchange format in [`store`];
//! [`refmodels`] provides small analytic heads and a planted-direction
//! generator so every metric can be exercised end to end.

pub mod cav;
pub mod error;
pub mod lexicon;
pub mod refmodels;
pub mod stats;
pub mod store;
pub mod sufficiency;
pub mod tcav;

#[cfg(feature = "cli")]
pub mod cli;

mod linalg;

pub use error::{Error, Result};
