//! Building the surrogate an experiment runs with.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::EvaluatedDataset;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::rng::SeedStream;
use crate::space::{sample_iid, InputSpace};
use crate::surrogate::{
    estimate_relative_mse, fit_krr, tune_krr, Bandwidth, KrrModel, KrrOptions, LinearSurrogate,
    ModelSurrogate, RelativeMse, Surrogate,
};

/// Relative-MSE targets of the two named quality tiers.
pub const HIGH_QUALITY: f64 = 0.01;
pub const LOW_QUALITY: f64 = 0.07;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SurrogateSpec {
    /// The model itself.
    Exact,
    Linear {
        intercept: f64,
        coeffs: Vec<f64>,
    },
    /// KRR on `train_size` fresh model runs; bandwidth from the median
    /// heuristic unless `gamma` is given.
    Krr {
        train_size: usize,
        #[serde(default)]
        gamma: Option<f64>,
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default = "default_centers")]
        max_centers: usize,
    },
    /// Smallest training size on `sizes` whose tuned KRR reaches relative
    /// MSE `<= target` on a held-out test set.
    Tier {
        target: f64,
        #[serde(default = "default_ladder")]
        sizes: Vec<usize>,
        #[serde(default = "default_validation")]
        validation: usize,
        #[serde(default = "default_test")]
        test: usize,
        #[serde(default = "default_centers")]
        max_centers: usize,
    },
    /// A saved KRR model.
    File {
        path: PathBuf,
    },
}

fn default_centers() -> usize {
    1000
}
fn default_ladder() -> Vec<usize> {
    vec![50, 100, 200, 400, 800, 1600, 3200]
}
fn default_validation() -> usize {
    1000
}
fn default_test() -> usize {
    2000
}

impl SurrogateSpec {
    pub fn tier(target: f64) -> Self {
        SurrogateSpec::Tier {
            target,
            sizes: default_ladder(),
            validation: default_validation(),
            test: default_test(),
            max_centers: default_centers(),
        }
    }
}

/// `exact`, `high`, `low`, `tier:<target>`, `krr:<train_size>`, `file:<path>`.
impl FromStr for SurrogateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let bad = || Error::invalid(format!("bad surrogate `{s}`"));
        match kind {
            "exact" => Ok(SurrogateSpec::Exact),
            "high" => Ok(SurrogateSpec::tier(HIGH_QUALITY)),
            "low" => Ok(SurrogateSpec::tier(LOW_QUALITY)),
            "tier" => Ok(SurrogateSpec::tier(arg.parse().map_err(|_| bad())?)),
            "krr" => Ok(SurrogateSpec::Krr {
                train_size: arg.parse().map_err(|_| bad())?,
                gamma: None,
                lambda: None,
                max_centers: default_centers(),
            }),
            "file" if !arg.is_empty() => Ok(SurrogateSpec::File { path: arg.into() }),
            _ => Err(Error::Unknown {
                kind: "surrogate",
                name: s.to_string(),
            }),
        }
    }
}

/// How the surrogate was obtained and how good it is on held-out data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub kind: String,
    pub training_size: usize,
    /// Model runs spent on training, tuning and testing; not part of any
    /// method's budget.
    pub model_evaluations: u64,
    pub test_relative_mse: Option<RelativeMse>,
    pub target: Option<f64>,
    pub achieved: Option<bool>,
    pub params: BTreeMap<String, f64>,
}

pub struct BuiltSurrogate<'a> {
    pub surrogate: Box<dyn Surrogate + 'a>,
    /// Present for trained or loaded kernel models so they can be saved.
    pub krr: Option<KrrModel>,
    pub report: SurrogateReport,
}

const GAMMA_MULTIPLIERS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
const LAMBDAS: [f64; 4] = [1e-8, 1e-6, 1e-4, 1e-2];

fn evaluated(model: &dyn Model, space: &InputSpace, n: usize, seed: u64) -> Result<EvaluatedDataset> {
    EvaluatedDataset::evaluate(model, sample_iid(space, n, seed)?)
}

/// Builds the surrogate from model runs drawn on streams of `seed` that no
/// trial uses.
pub fn build_surrogate<'a>(
    spec: &SurrogateSpec,
    model: &'a dyn Model,
    space: &InputSpace,
    seed: u64,
) -> Result<BuiltSurrogate<'a>> {
    let stream = SeedStream::new(seed);
    let test_seed = stream.derive("surrogate-test", 0).seed();
    let held_out = |s: &dyn Surrogate, n: usize| -> Result<RelativeMse> {
        estimate_relative_mse(s, &evaluated(model, space, n, test_seed)?)
    };
    let mut report = SurrogateReport {
        kind: String::new(),
        training_size: 0,
        model_evaluations: 0,
        test_relative_mse: None,
        target: None,
        achieved: None,
        params: BTreeMap::new(),
    };
    match spec {
        SurrogateSpec::Exact => {
            report.kind = "exact".into();
            Ok(BuiltSurrogate {
                surrogate: Box::new(ModelSurrogate(model)),
                krr: None,
                report,
            })
        }
        SurrogateSpec::Linear { intercept, coeffs } => {
            if coeffs.len() != space.dim() {
                return Err(Error::invalid(format!(
                    "linear surrogate has {} coefficients for {} inputs",
                    coeffs.len(),
                    space.dim()
                )));
            }
            let s = LinearSurrogate {
                intercept: *intercept,
                coeffs: coeffs.clone(),
            };
            report.kind = "linear".into();
            report.test_relative_mse = Some(held_out(&s, default_test())?);
            report.model_evaluations = default_test() as u64;
            Ok(BuiltSurrogate {
                surrogate: Box::new(s),
                krr: None,
                report,
            })
        }
        SurrogateSpec::Krr {
            train_size,
            gamma,
            lambda,
            max_centers,
        } => {
            let train = evaluated(model, space, *train_size, stream.derive("surrogate-train", 0).seed())?;
            let opts = KrrOptions {
                bandwidth: gamma.map_or(Bandwidth::MedianHeuristic, Bandwidth::Fixed),
                lambda: *lambda,
                max_centers: *max_centers,
                seed: stream.derive("krr", 0).seed(),
            };
            let k = fit_krr(&train, &opts)?;
            report.kind = "krr".into();
            report.training_size = *train_size;
            report.test_relative_mse = Some(held_out(&k, default_test())?);
            report.model_evaluations = (*train_size + default_test()) as u64;
            krr_params(&mut report, &k);
            Ok(BuiltSurrogate {
                surrogate: Box::new(k.clone()),
                krr: Some(k),
                report,
            })
        }
        SurrogateSpec::Tier {
            target,
            sizes,
            validation,
            test,
            max_centers,
        } => {
            if !(*target > 0.0) || sizes.is_empty() {
                return Err(Error::invalid("tier needs a positive target and training sizes"));
            }
            let val = evaluated(model, space, *validation, stream.derive("surrogate-validation", 0).seed())?;
            let test_data = evaluated(model, space, *test, test_seed)?;
            let mut evals = (*validation + *test) as u64;
            let mut best: Option<(KrrModel, RelativeMse, usize)> = None;
            for (i, &size) in sizes.iter().enumerate() {
                let train = evaluated(model, space, size, stream.derive("surrogate-train", i as u64).seed())?;
                evals += size as u64;
                let fit = tune_krr(
                    &train,
                    &val,
                    &GAMMA_MULTIPLIERS,
                    &LAMBDAS,
                    *max_centers,
                    stream.derive("krr", i as u64).seed(),
                )?;
                let score = estimate_relative_mse(&fit.model, &test_data)?;
                let done = score.value <= *target;
                if done || best.as_ref().is_none_or(|(_, b, _)| score.value < b.value) {
                    best = Some((fit.model, score, size));
                }
                if done {
                    break;
                }
            }
            let (k, score, size) = best.expect("at least one training size");
            report.kind = "krr".into();
            report.training_size = size;
            report.target = Some(*target);
            report.achieved = Some(score.value <= *target);
            report.test_relative_mse = Some(score);
            report.model_evaluations = evals;
            krr_params(&mut report, &k);
            Ok(BuiltSurrogate {
                surrogate: Box::new(k.clone()),
                krr: Some(k),
                report,
            })
        }
        SurrogateSpec::File { path } => {
            let k = KrrModel::load(path)?;
            if k.dim() != space.dim() {
                return Err(Error::invalid(format!(
                    "surrogate in {} takes {} inputs, model has {}",
                    path.display(),
                    k.dim(),
                    space.dim()
                )));
            }
            report.kind = "krr-file".into();
            report.training_size = k.training_size();
            report.test_relative_mse = Some(held_out(&k, default_test())?);
            report.model_evaluations = default_test() as u64;
            krr_params(&mut report, &k);
            Ok(BuiltSurrogate {
                surrogate: Box::new(k.clone()),
                krr: Some(k),
                report,
            })
        }
    }
}

fn krr_params(report: &mut SurrogateReport, k: &KrrModel) {
    report.params.insert("gamma".into(), k.gamma());
    report.params.insert("lambda".into(), k.lambda());
    report.params.insert("centers".into(), k.centers() as f64);
}
