//! Surrogates `f` for a computational model.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::space::SampleMatrix;

mod krr;
mod quality;

pub use krr::{fit_krr, tune_krr, Bandwidth, KrrFit, KrrModel, KrrOptions, TuneReport};
pub use quality::{estimate_relative_mse, relative_mse, RelativeMse};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurrogateInfo {
    pub kind: String,
    pub training_size: Option<usize>,
    pub params: BTreeMap<String, f64>,
    pub provenance: Option<String>,
}

/// A cheap deterministic approximation of `f*`. Implementations must be safe
/// to call from many threads at once.
pub trait Surrogate: Send + Sync {
    fn dim(&self) -> usize;

    fn predict(&self, x: &[f64]) -> f64;

    fn info(&self) -> SurrogateInfo;

    fn predict_rows(&self, rows: &SampleMatrix) -> Vec<f64> {
        rows.iter_rows().map(|r| self.predict(r)).collect()
    }
}

impl<S: Surrogate + ?Sized> Surrogate for Box<S> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn predict(&self, x: &[f64]) -> f64 {
        (**self).predict(x)
    }
    fn info(&self) -> SurrogateInfo {
        (**self).info()
    }
}

/// Uses a model directly as the surrogate (`f = f*` when given the target).
/// Calls here are not charged to any f* budget.
pub struct ModelSurrogate<M>(pub M);

impl<M: Model> Surrogate for ModelSurrogate<M> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn predict(&self, x: &[f64]) -> f64 {
        self.0.evaluate(x)
    }
    fn info(&self) -> SurrogateInfo {
        SurrogateInfo {
            kind: "model".into(),
            provenance: Some(self.0.name().to_string()),
            ..SurrogateInfo::default()
        }
    }
}

/// `intercept + Σ coeffs_i x_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSurrogate {
    pub intercept: f64,
    pub coeffs: Vec<f64>,
}

impl Surrogate for LinearSurrogate {
    fn dim(&self) -> usize {
        self.coeffs.len()
    }
    fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
    }
    fn info(&self) -> SurrogateInfo {
        let mut params = BTreeMap::new();
        params.insert("intercept".into(), self.intercept);
        for (i, c) in self.coeffs.iter().enumerate() {
            params.insert(format!("coeff_{}", i + 1), *c);
        }
        SurrogateInfo {
            kind: "linear".into(),
            params,
            ..SurrogateInfo::default()
        }
    }
}

/// Predictions from an external surrogate, looked up by exact input row.
///
/// Lets a surrogate that cannot be linked into this crate take part in a
/// floodgate run: export the base and resample points, evaluate them
/// elsewhere, and load the table. A lookup miss panics, naming the point.
#[derive(Clone, Debug)]
pub struct TabulatedSurrogate {
    d: usize,
    table: HashMap<Vec<u64>, f64>,
    source: String,
}

impl TabulatedSurrogate {
    pub fn new(points: &SampleMatrix, predictions: &[f64], source: impl Into<String>) -> Result<Self> {
        if points.rows() != predictions.len() {
            return Err(Error::invalid("prediction table rows do not match points"));
        }
        let mut table = HashMap::with_capacity(points.rows());
        for (row, &p) in points.iter_rows().zip(predictions) {
            let key = row.iter().map(|v| v.to_bits()).collect();
            if let Some(prev) = table.insert(key, p) {
                if prev.to_bits() != p.to_bits() {
                    return Err(Error::format(format!(
                        "conflicting predictions {prev} and {p} for point {row:?}"
                    )));
                }
            }
        }
        Ok(TabulatedSurrogate {
            d: points.dim(),
            table,
            source: source.into(),
        })
    }

    pub fn get(&self, x: &[f64]) -> Option<f64> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        self.table.get(&key).copied()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Surrogate for TabulatedSurrogate {
    fn dim(&self) -> usize {
        self.d
    }
    fn predict(&self, x: &[f64]) -> f64 {
        self.get(x)
            .unwrap_or_else(|| panic!("no tabulated prediction for point {x:?} in {}", self.source))
    }
    fn info(&self) -> SurrogateInfo {
        SurrogateInfo {
            kind: "table".into(),
            training_size: None,
            params: BTreeMap::new(),
            provenance: Some(self.source.clone()),
        }
    }
}
