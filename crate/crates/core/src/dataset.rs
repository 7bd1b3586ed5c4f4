use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::space::SampleMatrix;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub created: Option<String>,
}

/// Inputs with their model outputs; what gets persisted and reused.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluatedDataset {
    pub inputs: SampleMatrix,
    pub outputs: Vec<f64>,
    pub surrogate_outputs: Option<Vec<f64>>,
    pub provenance: Provenance,
}

impl EvaluatedDataset {
    pub fn new(inputs: SampleMatrix, outputs: Vec<f64>) -> Result<Self> {
        if inputs.rows() != outputs.len() {
            return Err(Error::invalid(format!(
                "{} input rows but {} outputs",
                inputs.rows(),
                outputs.len()
            )));
        }
        if let Some(i) = outputs.iter().position(|y| !y.is_finite()) {
            return Err(Error::invalid(format!("non-finite output at row {}", i + 1)));
        }
        let provenance = Provenance {
            seeds: inputs.seed.into_iter().collect(),
            ..Provenance::default()
        };
        Ok(EvaluatedDataset {
            inputs,
            outputs,
            surrogate_outputs: None,
            provenance,
        })
    }

    /// Evaluates `model` on every row.
    pub fn evaluate(model: &dyn Model, inputs: SampleMatrix) -> Result<Self> {
        if inputs.dim() != model.dim() {
            return Err(Error::invalid(format!(
                "model `{}` takes {} inputs, design has {}",
                model.name(),
                model.dim(),
                inputs.dim()
            )));
        }
        let outputs = inputs.iter_rows().map(|r| model.evaluate(r)).collect();
        let mut data = EvaluatedDataset::new(inputs, outputs)?;
        data.provenance.model = Some(model.name().to_string());
        Ok(data)
    }

    pub fn with_surrogate_outputs(mut self, preds: Vec<f64>) -> Result<Self> {
        if preds.len() != self.rows() {
            return Err(Error::invalid("surrogate outputs do not match row count"));
        }
        self.surrogate_outputs = Some(preds);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.inputs.rows()
    }

    pub fn dim(&self) -> usize {
        self.inputs.dim()
    }

    pub fn batch_ids(&self) -> Option<&[u32]> {
        self.inputs.batch_ids()
    }
}
