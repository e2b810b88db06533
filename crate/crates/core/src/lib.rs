//! Corrections for the winner's curse in significant genetic associations.
//!
//! A finding is selected because its test statistic exceeded a threshold, so
//! its naive effect estimate is biased upward. This crate provides the
//! conditional maximum likelihood estimator, spike-and-slab posterior means
//! under several priors, and a model average over a skeptical and a confident
//! prior whose weights come from bridge sampling.

pub mod bma;
pub mod correction;
pub mod error;
pub mod estimators;
pub mod io;
pub mod normal;
pub mod quadrature;
pub mod sampler;
pub mod simulation;

pub use correction::{correct, CorrectionSettings, Corrections};
pub use error::{Error, Result};
pub use estimators::{EstimateRecord, IntervalKind, Method};
pub use normal::TestContext;
pub use sampler::{ChainConfig, SpikeSlabPrior, SpikeUpdate};
