//! Early prediction of suicidal ideation and behaviour (SIB) from forum
//! interaction histories.
//!
//! The crate is `no_std` (with `alloc`) and contains every algorithmic piece
//! of the two-stage pipeline:
//!
//! * [`corpus`]: interaction data model, validation, annotation filters and
//!   inter-rater agreement.
//! * [`synthgen`]: a seeded forum generator with a planted risk signal and
//!   a Monte-Carlo Bayes-rate oracle.
//! * [`detect`]: the post-level SIB detector (stage 1).
//! * [`userset`]: user-level dataset construction, context selection and
//!   training-set resampling.
//! * [`earlysib`]: the two-branch sequence classifier (stage 2).
//! * [`trainer`]: cross-validation, early stopping, grid search, baselines,
//!   sweeps and ablations.
//! * [`explain`]: interaction-level Shapley attribution and the statistics
//!   derived from it.
//!
//! File formats, checkpoints and the command-line driver live in the
//! companion `earlysib` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod detect;
pub mod earlysib;
pub mod error;
pub mod explain;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod stats;
pub mod synthgen;
pub mod text;
pub mod trainer;
pub mod userset;

pub use error::{Error, Result};
