use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{build_paired_dataset, spf_jansen};
use crate::models::Model;
use crate::space::InputSpace;

pub const MIN_GROUND_TRUTH_N: usize = 100_000;

/// Reference total indices: a large pick-freeze estimate with standard
/// errors, plus the closed form when the model has one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub estimate: Vec<f64>,
    pub stderr: Vec<f64>,
    pub closed_form: Option<Vec<f64>>,
    pub n_large: usize,
    pub seed: u64,
    pub model_evaluations: u64,
}

impl GroundTruth {
    /// Closed form if known, otherwise the estimate.
    pub fn reference(&self) -> &[f64] {
        self.closed_form.as_deref().unwrap_or(&self.estimate)
    }
}

/// `n_large (d + 1)` model evaluations. Outputs with zero variance give
/// all-zero indices.
pub fn ground_truth(
    model: &dyn Model,
    space: &InputSpace,
    n_large: usize,
    seed: u64,
) -> Result<GroundTruth> {
    if n_large < MIN_GROUND_TRUTH_N {
        return Err(Error::invalid(format!(
            "ground truth needs n_large >= {MIN_GROUND_TRUTH_N}, got {n_large}"
        )));
    }
    let d = space.dim();
    let evaluations = n_large
        .checked_mul(d + 1)
        .ok_or_else(|| Error::invalid("ground-truth evaluation count overflows"))?
        as u64;
    let pairs = build_paired_dataset(model, space, n_large, seed)?;
    let mut estimate = Vec::with_capacity(d);
    let mut stderr = Vec::with_capacity(d);
    for j in 0..d {
        let r = spf_jansen(&pairs, j, 0.05)?;
        estimate.push(r.point_lower);
        stderr.push(r.diagnostics.s_lower / (r.diagnostics.n as f64).sqrt());
    }
    Ok(GroundTruth {
        estimate,
        stderr,
        closed_form: model.total_indices(),
        n_large,
        seed,
        model_evaluations: evaluations,
    })
}

/// The closed form alone, at no model cost.
pub fn closed_form_truth(model: &dyn Model) -> Option<GroundTruth> {
    let s = model.total_indices()?;
    Some(GroundTruth {
        stderr: vec![0.0; s.len()],
        estimate: s.clone(),
        closed_form: Some(s),
        n_large: 0,
        seed: 0,
        model_evaluations: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{AdditiveLinear, Constant, Ishigami};

    #[test]
    fn additive_matches_closed_form() {
        let f = AdditiveLinear::new(vec![1.0, 2.0]).unwrap();
        let g = ground_truth(&f, &f.input_space(), 1_000_000, 3).unwrap();
        assert_eq!(g.model_evaluations, 3_000_000);
        for j in 0..2 {
            assert!((g.estimate[j] - [0.2, 0.8][j]).abs() < 0.002, "{:?}", g.estimate);
            assert!(g.stderr[j] > 0.0 && g.stderr[j] < 0.002);
        }
    }

    #[test]
    fn ishigami_estimate_near_closed_form() {
        let f = Ishigami::default();
        let g = ground_truth(&f, &f.input_space(), 200_000, 4).unwrap();
        let c = g.closed_form.clone().unwrap();
        for j in 0..3 {
            assert!((g.estimate[j] - c[j]).abs() < 4.0 * g.stderr[j] + 1e-3, "{j}");
        }
    }

    #[test]
    fn constant_model_is_zero() {
        let f = Constant { d: 3, value: 2.0 };
        let g = ground_truth(&f, &f.input_space(), 100_000, 1).unwrap();
        assert_eq!(g.estimate, vec![0.0; 3]);
    }

    #[test]
    fn small_n_rejected() {
        let f = Constant { d: 1, value: 2.0 };
        assert!(ground_truth(&f, &f.input_space(), 10, 1).is_err());
    }
}
