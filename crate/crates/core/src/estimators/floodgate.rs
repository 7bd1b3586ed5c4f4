use rayon::prelude::*;

use super::{check_alpha, Diagnostics, IntervalResult, MethodTag};
use crate::dataset::EvaluatedDataset;
use crate::error::{Error, Result};
use crate::space::{resample_conditional, InputSpace, ResampleBlock, SampleMatrix};
use crate::stats::{nonnegative_variance, variance_terms, z_upper, Moments};
use crate::surrogate::Surrogate;

/// Per-sample floodgate terms for one input.
///
/// With `F_i` the mean of `f(x̃_i^(k), z_i)` over the `K` resamples:
///
/// * `m_z[i] = (f*_i - F_i)² - (f_i - F_i)² / (K + 1)`, unbiased for the MSE
///   of the conditional-mean surrogate `E[f | Z]`; may be negative.
/// * `m[i] = (f*_i - f_i)²`, unbiased for the MSE of `f`.
/// * `v[i] = n/(n-1) (f*_i - ȳ)²`, whose mean is the sample variance.
#[derive(Clone, Debug, PartialEq)]
pub struct FloodgateTerms {
    pub input_index: usize,
    pub m_z: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub k: usize,
    pub batch_ids: Option<Vec<u32>>,
}

impl FloodgateTerms {
    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// Draws the resample block for input `j` and forms the terms. Costs `nK`
/// surrogate calls (plus `n` for the base points when the dataset carries no
/// surrogate outputs) and no model calls.
pub fn floodgate_terms(
    data: &EvaluatedDataset,
    s: &dyn Surrogate,
    space: &InputSpace,
    j: usize,
    k: usize,
    seed: u64,
) -> Result<FloodgateTerms> {
    check_rows(data)?;
    let base = base_predictions(data, s)?;
    let block = resample_conditional(space, &data.inputs, j, k, seed)?;
    floodgate_terms_from_block(data, &base, s, &block)
}

/// Terms from an explicit resample block and precomputed base predictions.
pub fn floodgate_terms_from_block(
    data: &EvaluatedDataset,
    base_predictions: &[f64],
    s: &dyn Surrogate,
    block: &ResampleBlock,
) -> Result<FloodgateTerms> {
    check_rows(data)?;
    let n = data.rows();
    if base_predictions.len() != n || block.rows() != n {
        return Err(Error::invalid("terms need one prediction and one resample row per point"));
    }
    let j = block.input_index;
    let k = block.k;
    let v = variance_terms(&data.outputs);
    let mut m_z = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    let mut row = vec![0.0; data.dim()];
    for i in 0..n {
        row.copy_from_slice(data.inputs.row(i));
        let mut sum = 0.0;
        for &x in block.draws(i) {
            row[j] = x;
            sum += s.predict(&row);
        }
        let cond = sum / k as f64;
        let y = data.outputs[i];
        let f = base_predictions[i];
        m_z.push((y - cond).powi(2) - (f - cond).powi(2) / (k as f64 + 1.0));
        m.push((y - f).powi(2));
    }
    Ok(FloodgateTerms {
        input_index: j,
        m_z,
        m,
        v,
        k,
        batch_ids: data.batch_ids().map(<[u32]>::to_vec),
    })
}

/// Confidence interval `[L, U]` from the terms.
///
/// If the mean variance term is zero the interval is `[0, 1]`. Otherwise
/// `ℓ̂ = (M̄ᶻ - M̄)/V̄`, `û = M̄ᶻ/V̄`, the standard deviations come from the
/// delta method on the 3x3 sample covariance, and
/// `L = max(0, ℓ̂ - z s_ℓ/√n)`, `U = min(1, û + z s_u/√n)`.
/// Batch labels switch every moment to batch means with `n` = batches.
pub fn floodgate_interval(terms: &FloodgateTerms, alpha: f64) -> Result<IntervalResult> {
    check_alpha(alpha)?;
    let rows = terms.len();
    if terms.m_z.len() != rows || terms.v.len() != rows {
        return Err(Error::invalid("floodgate term arrays differ in length"));
    }
    let stacked: Vec<[f64; 3]> = (0..rows)
        .map(|i| [terms.m_z[i], terms.m[i], terms.v[i]])
        .collect();
    let mom = Moments::from_terms(&stacked, terms.batch_ids.as_deref())?;
    let [mz, mm, v] = mom.mean;
    let z = z_upper(alpha / 2.0);
    let mut diagnostics = Diagnostics {
        terms: vec!["m_z".into(), "m".into(), "v".into()],
        term_means: mom.mean.to_vec(),
        covariance: mom.cov_rows(),
        s_lower: 0.0,
        s_upper: 0.0,
        n: mom.n,
        rows,
        k: Some(terms.k),
        alpha,
        z,
        batched: mom.batched,
        degenerate: false,
        extras: Default::default(),
    };
    if v == 0.0 {
        diagnostics.degenerate = true;
        return Ok(IntervalResult {
            input_index: terms.input_index,
            method: MethodTag::Floodgate,
            lower: 0.0,
            upper: 1.0,
            point_lower: 0.0,
            point_upper: 1.0,
            diagnostics,
        });
    }
    let c = &mom.cov;
    let u_hat = mz / v;
    let l_hat = (mz - mm) / v;
    let s_u2 = (c[0][0] - 2.0 * u_hat * c[0][2] + u_hat * u_hat * c[2][2]) / (v * v);
    let s_l2 = (c[0][0] + c[1][1] + l_hat * l_hat * c[2][2] - 2.0 * c[0][1]
        + 2.0 * l_hat * (c[1][2] - c[0][2]))
        / (v * v);
    let scale = (c[0][0] + c[1][1] + c[2][2]) / (v * v);
    let s_u = nonnegative_variance(s_u2, scale, "floodgate s_u").sqrt();
    let s_l = nonnegative_variance(s_l2, scale, "floodgate s_l").sqrt();
    let root_n = (mom.n as f64).sqrt();
    diagnostics.s_lower = s_l;
    diagnostics.s_upper = s_u;
    Ok(IntervalResult {
        input_index: terms.input_index,
        method: MethodTag::Floodgate,
        lower: (l_hat - z * s_l / root_n).clamp(0.0, 1.0),
        upper: (u_hat + z * s_u / root_n).clamp(0.0, 1.0),
        point_lower: l_hat,
        point_upper: u_hat,
        diagnostics,
    })
}

/// Floodgate for every input from one dataset. The model outputs are shared;
/// each input gets its own resample stream derived from `seed`, so the
/// results do not depend on processing order.
pub fn floodgate_all_inputs(
    data: &EvaluatedDataset,
    s: &dyn Surrogate,
    space: &InputSpace,
    k: usize,
    seed: u64,
    alpha: f64,
) -> Result<Vec<IntervalResult>> {
    check_alpha(alpha)?;
    check_rows(data)?;
    let base = base_predictions(data, s)?;
    (0..space.dim())
        .into_par_iter()
        .map(|j| {
            let block = resample_conditional(space, &data.inputs, j, k, seed)?;
            let terms = floodgate_terms_from_block(data, &base, s, &block)?;
            floodgate_interval(&terms, alpha)
        })
        .collect()
}

/// Every point at which [`floodgate_all_inputs`] with the same `k` and
/// `seed` queries the surrogate: the base rows, then for each input `j` and
/// row `i` the `K` rows with `x_j` redrawn. Lets an external surrogate be
/// evaluated offline and supplied as a table.
pub fn floodgate_query_points(
    inputs: &SampleMatrix,
    space: &InputSpace,
    k: usize,
    seed: u64,
) -> Result<SampleMatrix> {
    let d = inputs.dim();
    let mut values = inputs.values().to_vec();
    for j in 0..space.dim() {
        let block = resample_conditional(space, inputs, j, k, seed)?;
        for i in 0..inputs.rows() {
            for &x in block.draws(i) {
                let start = values.len();
                values.extend_from_slice(inputs.row(i));
                values[start + j] = x;
            }
        }
    }
    SampleMatrix::from_rows(d, values, Some(seed))
}

fn check_rows(data: &EvaluatedDataset) -> Result<()> {
    if data.rows() < 2 {
        return Err(Error::invalid(format!(
            "floodgate needs at least 2 evaluated points, got {}",
            data.rows()
        )));
    }
    Ok(())
}

pub(crate) fn base_predictions(data: &EvaluatedDataset, s: &dyn Surrogate) -> Result<Vec<f64>> {
    if s.dim() != data.dim() {
        return Err(Error::invalid(format!(
            "surrogate takes {} inputs, dataset has {}",
            s.dim(),
            data.dim()
        )));
    }
    Ok(match &data.surrogate_outputs {
        Some(p) => p.clone(),
        None => predict(s, &data.inputs),
    })
}

fn predict(s: &dyn Surrogate, inputs: &SampleMatrix) -> Vec<f64> {
    s.predict_rows(inputs)
}
