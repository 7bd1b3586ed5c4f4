//! Sample-pick-freeze (Jansen) intervals.

use rayon::prelude::*;

use super::{check_alpha, clip01, Diagnostics, IntervalResult, MethodTag};
use crate::dataset::EvaluatedDataset;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::space::{resample_conditional, sample_iid, InputSpace, SampleMatrix};
use crate::stats::{nonnegative_variance, variance_terms, z_upper, Moments};
use crate::surrogate::Surrogate;

/// Base evaluations plus, for every input `j`, the outputs at the base rows
/// with coordinate `j` redrawn: `n(d + 1)` evaluations in all.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedDataset {
    pub base: EvaluatedDataset,
    /// `paired[j][i]` is the output at row `i` with input `j` resampled.
    pub paired: Vec<Vec<f64>>,
    pub seed: u64,
}

impl PairedDataset {
    pub fn rows(&self) -> usize {
        self.base.rows()
    }

    pub fn evaluations(&self) -> usize {
        self.rows() * (self.paired.len() + 1)
    }
}

/// Pairs for `model` on a fresh iid design. The base design and the redraws
/// use the same streams as floodgate with the same seed, so both methods see
/// identical points.
pub fn build_paired_dataset(
    model: &dyn Model,
    space: &InputSpace,
    n: usize,
    seed: u64,
) -> Result<PairedDataset> {
    check_dim(model.dim(), space)?;
    let inputs = sample_iid(space, n, seed)?;
    let mut pairs = pair_design(&|x| model.evaluate(x), inputs, space, seed)?;
    pairs.base.provenance.model = Some(model.name().to_string());
    Ok(pairs)
}

/// Pairs computed entirely on a surrogate.
pub fn build_surrogate_pairs(
    s: &dyn Surrogate,
    space: &InputSpace,
    n: usize,
    seed: u64,
) -> Result<PairedDataset> {
    check_dim(s.dim(), space)?;
    let inputs = sample_iid(space, n, seed)?;
    pair_design(&|x| s.predict(x), inputs, space, seed)
}

/// Pairs for an arbitrary evaluator on a given design. Resamples use `K = 1`
/// with stream `seed`.
pub fn pair_design(
    eval: &(dyn Fn(&[f64]) -> f64 + Sync),
    inputs: SampleMatrix,
    space: &InputSpace,
    seed: u64,
) -> Result<PairedDataset> {
    check_dim(inputs.dim(), space)?;
    let outputs: Vec<f64> = inputs.iter_rows().map(eval).collect();
    let paired = (0..space.dim())
        .into_par_iter()
        .map(|j| {
            let block = resample_conditional(space, &inputs, j, 1, seed)?;
            let mut row = vec![0.0; inputs.dim()];
            Ok((0..inputs.rows())
                .map(|i| {
                    row.copy_from_slice(inputs.row(i));
                    row[j] = block.draws(i)[0];
                    eval(&row)
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    if let Some((j, i)) = paired
        .iter()
        .enumerate()
        .find_map(|(j, p)| p.iter().position(|v| !v.is_finite()).map(|i| (j, i)))
    {
        return Err(Error::invalid(format!(
            "non-finite output at row {} with input {} resampled",
            i + 1,
            j + 1
        )));
    }
    Ok(PairedDataset {
        base: EvaluatedDataset::new(inputs, outputs)?,
        paired,
        seed,
    })
}

/// Jansen interval on model pairs.
pub fn spf_jansen(pairs: &PairedDataset, j: usize, alpha: f64) -> Result<IntervalResult> {
    jansen(pairs, j, alpha, MethodTag::Spf)
}

/// Jansen interval on surrogate pairs. It targets the surrogate's index, so
/// its nominal coverage of the model's index is not guaranteed.
pub fn spf_surrogate(pairs: &PairedDataset, j: usize, alpha: f64) -> Result<IntervalResult> {
    jansen(pairs, j, alpha, MethodTag::SpfSurrogate)
}

/// `Ŝ = Ā/V̄` with `A_i = ½(y_i - y'_i)²` and the variance terms of `y`,
/// plus a delta-method interval clipped to `[0, 1]`.
fn jansen(pairs: &PairedDataset, j: usize, alpha: f64, method: MethodTag) -> Result<IntervalResult> {
    check_alpha(alpha)?;
    let n = pairs.rows();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 pairs, got {n}")));
    }
    let y2 = pairs.paired.get(j).ok_or_else(|| {
        Error::invalid(format!(
            "input index {j} out of range for {} inputs",
            pairs.paired.len()
        ))
    })?;
    let y = &pairs.base.outputs;
    let v = variance_terms(y);
    let stacked: Vec<[f64; 2]> = (0..n)
        .map(|i| [0.5 * (y[i] - y2[i]).powi(2), v[i]])
        .collect();
    let mom = Moments::from_terms(&stacked, pairs.base.batch_ids())?;
    let [a, vbar] = mom.mean;
    let z = z_upper(alpha / 2.0);
    let mut diagnostics = Diagnostics {
        terms: vec!["a".into(), "v".into()],
        term_means: mom.mean.to_vec(),
        covariance: mom.cov_rows(),
        s_lower: 0.0,
        s_upper: 0.0,
        n: mom.n,
        rows: n,
        k: Some(1),
        alpha,
        z,
        batched: mom.batched,
        degenerate: false,
        extras: Default::default(),
    };
    if vbar == 0.0 {
        diagnostics.degenerate = true;
        diagnostics.extras.insert("estimate".into(), 0.0);
        return Ok(IntervalResult {
            input_index: j,
            method,
            lower: 0.0,
            upper: 1.0,
            point_lower: 0.0,
            point_upper: 0.0,
            diagnostics,
        });
    }
    let s_hat = a / vbar;
    let c = &mom.cov;
    let s2 = (c[0][0] - 2.0 * s_hat * c[0][1] + s_hat * s_hat * c[1][1]) / (vbar * vbar);
    let sd = nonnegative_variance(s2, (c[0][0] + c[1][1]) / (vbar * vbar), "jansen").sqrt();
    let half = z * sd / (mom.n as f64).sqrt();
    diagnostics.s_lower = sd;
    diagnostics.s_upper = sd;
    diagnostics.extras.insert("estimate".into(), s_hat);
    Ok(IntervalResult {
        input_index: j,
        method,
        lower: clip01(s_hat - half),
        upper: clip01(s_hat + half),
        point_lower: s_hat,
        point_upper: s_hat,
        diagnostics,
    })
}

fn check_dim(d: usize, space: &InputSpace) -> Result<()> {
    if d != space.dim() {
        return Err(Error::invalid(format!(
            "evaluator takes {d} inputs, space has {}",
            space.dim()
        )));
    }
    Ok(())
}
