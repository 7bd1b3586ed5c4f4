//! Repeated-trial experiments: budgets, coverage against ground truth and
//! interval-width curves.

use serde::{Deserialize, Serialize};

use crate::dataset::EvaluatedDataset;
use crate::error::{Error, Result};
use crate::estimators::{floodgate_all_inputs, IntervalResult, MethodTag};
use crate::methods::{Design, IntervalMethod, MethodRegistry};
use crate::models::ModelSpec;
use crate::space::InputSpace;
use crate::surrogate::Surrogate;

mod coverage;
mod surrogates;
mod truth;

pub use coverage::{
    reference_truth, run_coverage_experiment, run_trials, run_width_curve, run_with, summarize,
    width_curve, CoverageReport, CoverageRow, LedgerEntry, Setup, SlopeRow, TrialOutcome,
    WidthCurve,
};
pub use surrogates::{
    build_surrogate, BuiltSurrogate, SurrogateReport, SurrogateSpec, HIGH_QUALITY, LOW_QUALITY,
};
pub use truth::{closed_form_truth, ground_truth, GroundTruth, MIN_GROUND_TRUTH_N};

/// How a budget of `N` model runs is split by each method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub budget: usize,
    pub d: usize,
}

impl BudgetPlan {
    pub fn new(budget: usize, d: usize) -> Self {
        BudgetPlan { budget, d }
    }

    pub fn sample_size(&self, m: &dyn IntervalMethod) -> usize {
        m.sample_size(self.budget, self.d)
    }

    pub fn model_evaluations(&self, m: &dyn IntervalMethod) -> u64 {
        m.model_evaluations(self.budget, self.d)
    }

    /// At least two points or pairs are needed for a variance.
    pub fn feasible(&self, m: &dyn IntervalMethod) -> bool {
        self.sample_size(m) >= 2
    }
}

/// Whether every trial draws a new design or only new resamples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    #[default]
    Fresh,
    FreshResamples,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSpec {
    /// Use the model's closed form when it has one.
    #[serde(default = "yes")]
    pub closed_form: bool,
    #[serde(default = "default_n_large")]
    pub n_large: usize,
}

fn yes() -> bool {
    true
}
fn default_n_large() -> usize {
    1_000_000
}

impl Default for TruthSpec {
    fn default() -> Self {
        TruthSpec {
            closed_form: true,
            n_large: default_n_large(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub surrogate: SurrogateSpec,
    #[serde(default = "all_methods")]
    pub methods: Vec<MethodTag>,
    /// Model-evaluation budgets `N`, ascending.
    pub budgets: Vec<usize>,
    pub trials: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub design: Design,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub truth: TruthSpec,
    /// Keep every per-trial interval in the report.
    #[serde(default)]
    pub keep_trials: bool,
}

fn all_methods() -> Vec<MethodTag> {
    MethodTag::ALL.to_vec()
}
fn default_alpha() -> f64 {
    0.05
}
fn default_k() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec, surrogate: SurrogateSpec, budgets: Vec<usize>, trials: usize) -> Self {
        ExperimentConfig {
            model,
            surrogate,
            methods: all_methods(),
            budgets,
            trials,
            alpha: default_alpha(),
            k: default_k(),
            seed: 0,
            design: Design::Iid,
            protocol: Protocol::Fresh,
            truth: TruthSpec::default(),
            keep_trials: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.budgets.is_empty() {
            return Err(Error::invalid("at least one budget is required"));
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("budgets must be strictly ascending"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        if m.len() != self.methods.len() {
            return Err(Error::invalid("methods are listed more than once"));
        }
        Ok(())
    }

    pub fn registry(&self) -> MethodRegistry {
        MethodRegistry::default()
    }
}

/// Floodgate on a dataset that already exists; no model runs. Batch labels
/// in the dataset switch to batch means.
pub fn apply_to_existing_dataset(
    data: &EvaluatedDataset,
    surrogate: &dyn Surrogate,
    space: &InputSpace,
    alpha: f64,
    k: usize,
    seed: u64,
) -> Result<Vec<IntervalResult>> {
    if data.dim() != space.dim() {
        return Err(Error::invalid(format!(
            "dataset has {} inputs, space has {}",
            data.dim(),
            space.dim()
        )));
    }
    floodgate_all_inputs(data, surrogate, space, k, seed, alpha)
}
