//! Temporal modelling of reviewer posting dynamics.
//!
//! Reviewers are described by the inter-arrival times between their
//! consecutive reviews. A two-state HMM with exponential emissions separates
//! an active (bursty) mode from an inactive one; a labeled variant with one
//! HMM per class classifies users as spammers or genuine reviewers; decoded
//! active-state reviews drive a co-bursting user graph whose communities
//! expose collusive spammer groups.
//!
//! Module map:
//!
//! - [`datamodel`]: reviews, datasets, per-user inter-arrival sequences.
//! - [`hmm`]: emission density, Viterbi, forward likelihood, Baum-Welch, sampling.
//! - [`lhmm`]: labeled HMM fitting and Bayes classification.
//! - [`coburst`]: state annotation, co-bursting and co-reviewing graphs.
//! - [`cluster`]: modularity, Louvain, purity and entropy.
//! - [`eval`]: k-fold cross validation and classification metrics.
//! - [`synth`]: labeled synthetic review ecosystems with planted campaigns.
//! - [`analysis`]: histogram, state-mean, interval-pair and correlation exports.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cluster;
pub mod coburst;
pub mod datamodel;
mod error;
pub mod eval;
pub mod exec;
pub mod hmm;
pub mod lhmm;
pub mod synth;
mod textfmt;

pub use error::{Error, Result};
pub use exec::Execution;
