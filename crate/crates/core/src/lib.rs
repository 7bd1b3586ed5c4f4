//! Confidence intervals for total-order Sobol' indices of expensive models,
//! using a surrogate to cut the number of model evaluations.
//!
//! The core method ([`estimators::floodgate_interval`]) turns `n` model
//! evaluations and any surrogate into an asymptotically valid interval whose
//! width shrinks with the surrogate's error. Baselines ([`estimators::spf_jansen`],
//! [`estimators::spf_surrogate`], [`estimators::panin_interval`]), the
//! test models, kernel-ridge surrogates and the coverage harness live
//! alongside it.

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod methods;
pub mod models;
pub mod rng;
pub mod space;
pub mod stats;
pub mod surrogate;

pub use dataset::{EvaluatedDataset, Provenance};
pub use error::{Error, Result};
pub use estimators::{Diagnostics, IntervalResult, MethodTag};
pub use models::Model;
pub use space::{InputSpace, SampleMatrix};
pub use surrogate::Surrogate;
