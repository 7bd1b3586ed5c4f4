//! Kernel ridge regression with a Gaussian (RBF) kernel.
//!
//! Inputs are mapped affinely onto the unit cube using the training ranges,
//! targets are centered on their training mean, and
//! `(K + λI) w = y - ȳ` is solved by Cholesky factorization with
//! `K_ij = exp(-‖x_i - x_j‖² / (2γ²))`. Predictions are `ȳ + Σ w_i k(x, x_i)`,
//! so a constant target is reproduced exactly. Above `max_centers` training
//! rows, a seeded subset serves as centers and every row enters the
//! subset-of-regressors system `(K_nmᵀ K_nm + λ K_mm) w = K_nmᵀ (y - ȳ)`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{estimate_relative_mse, RelativeMse, Surrogate, SurrogateInfo};
use crate::dataset::EvaluatedDataset;
use crate::error::{Error, Result};
use crate::rng::SeedStream;

pub const KRR_FORMAT_VERSION: u32 = 1;

/// Points used to compute the median pairwise distance.
const MEDIAN_SUBSAMPLE: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bandwidth {
    Fixed(f64),
    MedianHeuristic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KrrOptions {
    pub bandwidth: Bandwidth,
    /// Ridge penalty; `None` means `1e-6 * m`.
    pub lambda: Option<f64>,
    pub max_centers: usize,
    /// Drives the center subsample and the median-heuristic subsample.
    pub seed: u64,
}

impl Default for KrrOptions {
    fn default() -> Self {
        KrrOptions {
            bandwidth: Bandwidth::MedianHeuristic,
            lambda: None,
            max_centers: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Scaling {
    lower: Vec<f64>,
    width: Vec<f64>,
}

/// Fitted model; also the on-disk JSON schema (see [`KrrModel::save`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrrModel {
    format_version: u32,
    d: usize,
    /// Scaled centers, row-major `m x d`.
    centers: Vec<Vec<f64>>,
    weights: Vec<f64>,
    gamma: f64,
    lambda: f64,
    intercept: f64,
    scaling: Scaling,
    training_size: usize,
    #[serde(skip)]
    flat: Vec<f64>,
}

impl KrrModel {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn centers(&self) -> usize {
        self.weights.len()
    }

    pub fn training_size(&self) -> usize {
        self.training_size
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(format!("serializing KRR model: {e}")))?;
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut model: KrrModel = serde_json::from_str(text)
            .map_err(|e| Error::format(format!("KRR model file: {e}")))?;
        if model.format_version != KRR_FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported KRR format_version {}",
                model.format_version
            )));
        }
        let m = model.weights.len();
        if m == 0
            || model.centers.len() != m
            || model.centers.iter().any(|c| c.len() != model.d)
            || model.scaling.lower.len() != model.d
            || model.scaling.width.len() != model.d
        {
            return Err(Error::format("KRR model file has inconsistent shapes"));
        }
        if !(model.gamma > 0.0) || !model.weights.iter().all(|w| w.is_finite()) {
            return Err(Error::format("KRR model needs gamma > 0 and finite weights"));
        }
        model.flat = model.centers.concat();
        Ok(model)
    }

    fn scale_into(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = (x[k] - self.scaling.lower[k]) / self.scaling.width[k];
        }
    }
}

impl Surrogate for KrrModel {
    fn dim(&self) -> usize {
        self.d
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let mut buf = [0.0f64; 16];
        let mut heap;
        let z: &mut [f64] = if self.d <= buf.len() {
            &mut buf[..self.d]
        } else {
            heap = vec![0.0; self.d];
            &mut heap
        };
        self.scale_into(x, z);
        let scale = -0.5 / (self.gamma * self.gamma);
        let mut acc = 0.0;
        for (c, w) in self.flat.chunks_exact(self.d).zip(&self.weights) {
            let mut r2 = 0.0;
            for (a, b) in c.iter().zip(z.iter()) {
                let t = a - b;
                r2 += t * t;
            }
            acc += w * (scale * r2).exp();
        }
        self.intercept + acc
    }

    fn info(&self) -> SurrogateInfo {
        let mut params = BTreeMap::new();
        params.insert("gamma".into(), self.gamma);
        params.insert("lambda".into(), self.lambda);
        params.insert("centers".into(), self.weights.len() as f64);
        SurrogateInfo {
            kind: "krr".into(),
            training_size: Some(self.training_size),
            params,
            provenance: None,
        }
    }
}

pub fn fit_krr(train: &EvaluatedDataset, opts: &KrrOptions) -> Result<KrrModel> {
    let n = train.rows();
    let d = train.dim();
    if n == 0 {
        return Err(Error::invalid("KRR needs a nonempty training set"));
    }
    if opts.max_centers == 0 {
        return Err(Error::invalid("max_centers must be at least 1"));
    }
    let stream = SeedStream::new(opts.seed);

    let mut lower = vec![f64::INFINITY; d];
    let mut upper = vec![f64::NEG_INFINITY; d];
    for row in train.inputs.iter_rows() {
        for k in 0..d {
            lower[k] = lower[k].min(row[k]);
            upper[k] = upper[k].max(row[k]);
        }
    }
    let width: Vec<f64> = lower
        .iter()
        .zip(&upper)
        .map(|(lo, hi)| if hi > lo { hi - lo } else { 1.0 })
        .collect();
    let scaling = Scaling { lower, width };

    let chosen: Vec<usize> = if n > opts.max_centers {
        let mut idx = index::sample(&mut stream.rng("krr-centers", 0), n, opts.max_centers).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let m = chosen.len();
    let scale_row = |i: usize| -> Vec<f64> {
        train
            .inputs
            .row(i)
            .iter()
            .enumerate()
            .map(|(k, v)| (v - scaling.lower[k]) / scaling.width[k])
            .collect()
    };
    let centers: Vec<Vec<f64>> = chosen.iter().map(|&i| scale_row(i)).collect();
    let intercept = train.outputs.iter().sum::<f64>() / n as f64;

    let gamma = match opts.bandwidth {
        Bandwidth::Fixed(g) => {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::invalid("KRR bandwidth must be positive"));
            }
            g
        }
        Bandwidth::MedianHeuristic => median_distance(&centers, &stream)?,
    };
    let lambda = opts.lambda.unwrap_or(1e-6 * m as f64);
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("KRR ridge penalty must be >= 0"));
    }

    let scale = -0.5 / (gamma * gamma);
    let kernel = |a: &[f64], b: &[f64]| -> f64 {
        let r2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        (scale * r2).exp()
    };
    let mut kmm = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        kmm[(i, i)] = 1.0;
        for j in 0..i {
            let v = kernel(&centers[i], &centers[j]);
            kmm[(i, j)] = v;
            kmm[(j, i)] = v;
        }
    }
    let (system, rhs) = if m == n {
        let rhs = DVector::from_iterator(m, chosen.iter().map(|&i| train.outputs[i] - intercept));
        (kmm + DMatrix::identity(m, m) * lambda, rhs)
    } else {
        // Subset of regressors: all n points fit the weights of m centers,
        // (K_nmᵀ K_nm + λ K_mm) w = K_nmᵀ (y - ȳ).
        let mut knm = DMatrix::<f64>::zeros(n, m);
        for i in 0..n {
            let x = scale_row(i);
            for (j, c) in centers.iter().enumerate() {
                knm[(i, j)] = kernel(&x, c);
            }
        }
        let y = DVector::from_iterator(n, train.outputs.iter().map(|v| v - intercept));
        let mut system = knm.tr_mul(&knm) + kmm * lambda;
        // K_mm is numerically rank deficient for wide kernels; a relative
        // jitter keeps the factorization stable.
        let jitter = 1e-10 * system.diagonal().max();
        for i in 0..m {
            system[(i, i)] += jitter;
        }
        (system, knm.tr_mul(&y))
    };
    let chol = system.cholesky().ok_or_else(|| {
        Error::Numerical(format!(
            "kernel system with lambda = {lambda} is not positive definite \
             (duplicate training points?); raise lambda"
        ))
    })?;
    let weights: Vec<f64> = chol.solve(&rhs).iter().copied().collect();
    if !weights.iter().all(|w| w.is_finite()) {
        return Err(Error::Numerical(
            "kernel solve produced non-finite weights; raise lambda".into(),
        ));
    }
    let flat = centers.concat();
    Ok(KrrModel {
        format_version: KRR_FORMAT_VERSION,
        d,
        centers,
        weights,
        gamma,
        lambda,
        intercept,
        scaling,
        training_size: n,
        flat,
    })
}

fn median_distance(points: &[Vec<f64>], stream: &SeedStream) -> Result<f64> {
    let n = points.len();
    let picked: Vec<usize> = if n > MEDIAN_SUBSAMPLE {
        index::sample(&mut stream.rng("krr-median", 0), n, MEDIAN_SUBSAMPLE).into_vec()
    } else {
        (0..n).collect()
    };
    let mut dists = Vec::with_capacity(picked.len() * picked.len() / 2);
    for (a, &i) in picked.iter().enumerate() {
        for &j in &picked[a + 1..] {
            let r2: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(x, y)| (x - y).powi(2))
                .sum();
            dists.push(r2.sqrt());
        }
    }
    dists.retain(|&v| v > 0.0);
    if dists.is_empty() {
        return Err(Error::invalid(
            "median heuristic needs at least two distinct training points",
        ));
    }
    let mid = dists.len() / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    Ok(*median)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TuneReport {
    pub gamma: f64,
    pub lambda: f64,
    pub validation: RelativeMse,
    /// `(gamma, lambda, relative MSE)` for every grid point that fit.
    pub grid: Vec<(f64, f64, f64)>,
}

pub struct KrrFit {
    pub model: KrrModel,
    pub report: TuneReport,
}

/// Grid search over bandwidth multipliers of the median heuristic and ridge
/// penalties, scored by relative MSE on `validation`.
pub fn tune_krr(
    train: &EvaluatedDataset,
    validation: &EvaluatedDataset,
    gamma_multipliers: &[f64],
    lambdas: &[f64],
    max_centers: usize,
    seed: u64,
) -> Result<KrrFit> {
    let base = KrrOptions {
        bandwidth: Bandwidth::MedianHeuristic,
        lambda: None,
        max_centers,
        seed,
    };
    let median = fit_krr(train, &base)?.gamma;
    let mut best: Option<(KrrModel, RelativeMse)> = None;
    let mut grid = Vec::new();
    for &mult in gamma_multipliers {
        for &lambda in lambdas {
            let opts = KrrOptions {
                bandwidth: Bandwidth::Fixed(median * mult),
                lambda: Some(lambda),
                ..base.clone()
            };
            let Ok(model) = fit_krr(train, &opts) else {
                continue;
            };
            let score = estimate_relative_mse(&model, validation)?;
            grid.push((model.gamma, lambda, score.value));
            if best.as_ref().is_none_or(|(_, b)| score.value < b.value) {
                best = Some((model, score));
            }
        }
    }
    let (model, validation) =
        best.ok_or_else(|| Error::Numerical("no grid point produced a usable KRR fit".into()))?;
    Ok(KrrFit {
        report: TuneReport {
            gamma: model.gamma,
            lambda: model.lambda,
            validation,
            grid,
        },
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Ishigami, Model};
    use crate::space::{sample_iid, InputSpace, SampleMatrix};

    fn dataset(f: &dyn Model, n: usize, seed: u64) -> EvaluatedDataset {
        EvaluatedDataset::evaluate(f, sample_iid(&f.input_space(), n, seed).unwrap()).unwrap()
    }

    #[test]
    fn interpolates_with_tiny_ridge() {
        let f = Ishigami::new(7.0, 0.1);
        let train = dataset(&f, 30, 1);
        let opts = KrrOptions {
            lambda: Some(1e-12),
            ..KrrOptions::default()
        };
        let model = fit_krr(&train, &opts).unwrap();
        for (row, y) in train.inputs.iter_rows().zip(&train.outputs) {
            let p = model.predict(row);
            assert!((p - y).abs() <= 1e-6 * y.abs().max(1.0), "{p} vs {y}");
        }
    }

    #[test]
    fn constant_targets_recovered() {
        let space = InputSpace::unit_cube(3).unwrap();
        let x = sample_iid(&space, 50, 2).unwrap();
        let train = EvaluatedDataset::new(x, vec![4.25; 50]).unwrap();
        let model = fit_krr(&train, &KrrOptions::default()).unwrap();
        for p in [[0.1, 0.9, 0.5], [2.0, -1.0, 0.3]] {
            assert!((model.predict(&p) - 4.25).abs() < 1e-8);
        }
    }

    #[test]
    fn duplicates_without_ridge_fail_with_hint() {
        let x = SampleMatrix::from_rows(1, vec![0.0, 0.5, 0.5, 1.0], None).unwrap();
        let train = EvaluatedDataset::new(x, vec![1.0, 2.0, 2.0, 0.0]).unwrap();
        let opts = KrrOptions {
            lambda: Some(0.0),
            ..KrrOptions::default()
        };
        match fit_krr(&train, &opts) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("raise lambda")),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn ishigami_tuned_fit_is_accurate() {
        let f = Ishigami::new(7.0, 0.1);
        let train = dataset(&f, 2000, 3);
        let valid = dataset(&f, 1000, 4);
        let test = dataset(&f, 5000, 5);
        let fit = tune_krr(&train, &valid, &[0.25, 0.5, 1.0], &[1e-6, 1e-4, 1e-2], 2000, 6).unwrap();
        let r = estimate_relative_mse(&fit.model, &test).unwrap();
        assert!(r.value <= 0.05, "held-out relative MSE {}", r.value);
    }

    #[test]
    fn center_cap_and_round_trip() {
        let f = Ishigami::new(7.0, 0.1);
        let train = dataset(&f, 300, 7);
        let opts = KrrOptions {
            max_centers: 100,
            ..KrrOptions::default()
        };
        let model = fit_krr(&train, &opts).unwrap();
        assert_eq!(model.centers(), 100);
        assert_eq!(model.training_size(), 300);
        let text = serde_json::to_string(&model).unwrap();
        let back = KrrModel::from_json(&text).unwrap();
        let x = [0.4, -2.0, 1.1];
        assert_eq!(model.predict(&x).to_bits(), back.predict(&x).to_bits());
        assert!(KrrModel::from_json(&text.replace("\"format_version\":1", "\"format_version\":9"))
            .is_err());
    }
}
