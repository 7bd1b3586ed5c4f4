use serde::{Deserialize, Serialize};

use super::Surrogate;
use crate::dataset::EvaluatedDataset;
use crate::error::{Error, Result};
use crate::stats::{nonnegative_variance, variance_terms, Moments};

/// `Ê² = mean((f* - f)²) / sample variance(f*)` with its delta-method
/// standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeMse {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

impl RelativeMse {
    /// `Ê = sqrt(Ê²)`.
    pub fn root(&self) -> f64 {
        self.value.sqrt()
    }
}

pub fn estimate_relative_mse(s: &dyn Surrogate, eval: &EvaluatedDataset) -> Result<RelativeMse> {
    if s.dim() != eval.dim() {
        return Err(Error::invalid("surrogate and dataset dimensions differ"));
    }
    let preds = s.predict_rows(&eval.inputs);
    relative_mse(&eval.outputs, &preds)
}

/// Relative MSE from paired model outputs and predictions.
pub fn relative_mse(y: &[f64], f: &[f64]) -> Result<RelativeMse> {
    if y.len() != f.len() {
        return Err(Error::invalid("outputs and predictions differ in length"));
    }
    if y.len() < 2 {
        return Err(Error::invalid("relative MSE needs at least 2 rows"));
    }
    let v = variance_terms(y);
    let terms: Vec<[f64; 2]> = y
        .iter()
        .zip(f)
        .zip(&v)
        .map(|((a, b), vi)| [(a - b).powi(2), *vi])
        .collect();
    let m = Moments::from_terms(&terms, None)?;
    let [mse, var] = m.mean;
    if var == 0.0 {
        return Err(Error::Degenerate(
            "model outputs have zero sample variance; relative MSE undefined".into(),
        ));
    }
    let ratio = mse / var;
    let g = [1.0 / var, -ratio / var];
    let s2 = nonnegative_variance(m.quadratic_form(&g), ratio * ratio, "relative MSE");
    Ok(RelativeMse {
        value: ratio,
        stderr: (s2 / m.n as f64).sqrt(),
        n: m.n,
    })
}
