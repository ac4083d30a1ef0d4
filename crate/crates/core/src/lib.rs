//! Multi-label zero-shot prediction in a semantic word-vector space.
//!
//! Instances are regressed from feature space into a word-vector space. Every
//! nonempty combination of the unseen target labels is synthesized there as
//! the sum of its members' vectors, and three predictors turn a projected
//! instance into a label set:
//!
//! - [`zsl::exdap_predict`] decodes each label independently with a
//!   pseudo-inverse of the label embedding matrix.
//! - [`zsl::dmp_predict`] assigns the nearest synthesized label combination.
//! - [`zsl::tramp_predict`] propagates combination labels to test instances
//!   over a kNN graph, in closed form.
//!
//! [`zsl::self_train_prototypes`] moves each combination prototype to the mean
//! of its nearest projected test instances before prediction.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod regression;
pub mod seed;
pub mod synth;
pub mod wordspace;
pub mod zsl;

pub use error::{Result, ZsmlError};
