//! Contrast-trained prefix tuning for a small code-generating decoder.
//!
//! A frozen base model gets a learned block of virtual key/value rows
//! prepended to every attention layer. The prefix is trained on pairs of
//! functionally similar programs of different lint quality: a ranking loss
//! pushes the preferred program's masked likelihood above the other's,
//! while a divergence penalty keeps the model's behavior on unchanged
//! tokens close to the bare model.
//!
//! The numeric core is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the end-to-end pipeline pins `f64` via the aliases at the crate root.
//!
//! - [`lexdiff`]: code lexer, difference masks, bag-of-tokens similarity
//! - [`quality`]: lint reports and the 0 to 10 quality score
//! - [`tasks`]: task manifests and shell-test execution
//! - [`pairs`]: contrast-pair selection and the on-disk dataset
//! - [`model`]: the decoder, prefix parameterization, sampling, checkpoints
//! - [`train`]: losses, gradients, optimizer, pretraining, both tuning stages
//! - [`eval`]: pass@k, quality aggregates, issue-frequency tables
//! - [`corpus`] and [`pipeline`]: synthetic tasks and full-run orchestration

pub mod corpus;
pub mod error;
pub mod eval;
pub mod lexdiff;
pub mod model;
pub mod pairs;
pub mod pipeline;
pub mod quality;
pub mod scalar;
pub mod tasks;
pub mod train;
pub mod util;

pub use error::{Error, Result};

/// Base decoder weights at the default precision.
pub type BaseModel = model::BaseParams<f64>;
/// Materialized prefix rows at the default precision.
pub type Prefix = model::PrefixParams<f64>;
/// Factorized prefix parameterization at the default precision.
pub type Reparam = model::ReparamState<f64>;
/// Optimizer state at the default precision.
pub type Optimizer = train::AdamW<f64>;
