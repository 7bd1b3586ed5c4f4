//! Confidence intervals for total-order indices.
//!
//! All methods reduce to per-sample term vectors whose means and sample
//! covariance feed a delta-method normal interval, clipped to `[0, 1]`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod floodgate;
pub(crate) mod panin;
mod spf;

pub use floodgate::{
    floodgate_all_inputs, floodgate_interval, floodgate_query_points, floodgate_terms,
    floodgate_terms_from_block,
    FloodgateTerms,
};
pub use panin::{panin_bound, panin_interval, panin_terms, PaninTerms};
pub use spf::{
    build_paired_dataset, build_surrogate_pairs, pair_design, spf_jansen, spf_surrogate,
    PairedDataset,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodTag {
    Floodgate,
    Spf,
    SpfSurrogate,
    Panin,
}

impl MethodTag {
    pub const ALL: [MethodTag; 4] = [
        MethodTag::Floodgate,
        MethodTag::Spf,
        MethodTag::SpfSurrogate,
        MethodTag::Panin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::Floodgate => "floodgate",
            MethodTag::Spf => "spf",
            MethodTag::SpfSurrogate => "spf-surrogate",
            MethodTag::Panin => "panin",
        }
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodTag::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "method",
                name: s.to_string(),
            })
    }
}

/// Everything needed to audit an interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Names of the per-sample terms, in covariance order.
    pub terms: Vec<String>,
    pub term_means: Vec<f64>,
    /// Sample covariance of the terms (of batch means when batched).
    pub covariance: Vec<Vec<f64>>,
    /// Delta-method standard deviations before dividing by `sqrt(n)`.
    pub s_lower: f64,
    pub s_upper: f64,
    /// Effective sample size: rows, or batches when batched.
    pub n: usize,
    pub rows: usize,
    pub k: Option<usize>,
    pub alpha: f64,
    pub z: f64,
    pub batched: bool,
    /// The zero-variance branch returned `[0, 1]`.
    pub degenerate: bool,
    /// Method-specific scalars, e.g. the surrogate error estimate.
    pub extras: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub input_index: usize,
    pub method: MethodTag,
    pub lower: f64,
    pub upper: f64,
    pub point_lower: f64,
    pub point_upper: f64,
    pub diagnostics: Diagnostics,
}

impl IntervalResult {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn covers(&self, s: f64) -> bool {
        self.lower <= s && s <= self.upper
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

pub(crate) fn clip01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}
