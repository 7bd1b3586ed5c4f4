use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::surrogates::{build_surrogate, SurrogateReport};
use super::truth::{closed_form_truth, ground_truth, GroundTruth};
use super::{BudgetPlan, ExperimentConfig, Protocol};
use crate::error::{Error, Result};
use crate::estimators::{IntervalResult, MethodTag};
use crate::io::fmt_f64;
use crate::methods::{MethodRegistry, TrialContext};
use crate::models::{CountingModel, Model};
use crate::rng::SeedStream;
use crate::space::InputSpace;
use crate::stats::{mean_and_se, ols_slope};
use crate::surrogate::Surrogate;

/// Everything a set of trials runs against.
pub struct Setup<'a> {
    pub model: &'a dyn Model,
    pub space: InputSpace,
    pub surrogate: &'a dyn Surrogate,
    pub surrogate_report: SurrogateReport,
    pub truth: GroundTruth,
}

/// One method on one trial at one budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub budget: usize,
    pub method: MethodTag,
    /// The budget leaves fewer than two points or pairs.
    pub skipped: bool,
    pub model_evaluations: u64,
    pub intervals: Vec<IntervalResult>,
}

/// Means come with standard errors across trials; both are `None` when
/// there are too few trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub method: MethodTag,
    pub input: usize,
    pub name: String,
    pub budget: usize,
    pub n: usize,
    pub trials: usize,
    pub skipped: bool,
    pub truth: f64,
    pub nominal: f64,
    pub mean_lower: Option<f64>,
    pub se_lower: Option<f64>,
    pub mean_upper: Option<f64>,
    pub se_upper: Option<f64>,
    pub mean_width: Option<f64>,
    pub se_width: Option<f64>,
    /// Floodgate only: width beyond the estimated bound gap `M̄/V̄`.
    pub mean_excess_width: Option<f64>,
    pub se_excess_width: Option<f64>,
    pub coverage: Option<f64>,
    pub se_coverage: Option<f64>,
    pub degenerate: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub method: MethodTag,
    pub budget: usize,
    pub planned_per_trial: u64,
    pub counted_total: u64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: ExperimentConfig,
    pub input_names: Vec<String>,
    pub truth: GroundTruth,
    pub surrogate: SurrogateReport,
    pub rows: Vec<CoverageRow>,
    pub ledger: Vec<LedgerEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<Vec<TrialOutcome>>,
}

impl CoverageReport {
    pub fn row(&self, method: MethodTag, input: usize, budget: usize) -> Option<&CoverageRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.input == input && r.budget == budget)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# format_version={}\n", crate::io::FORMAT_VERSION);
        out.push_str(
            "method,input,name,budget,n,trials,skipped,truth,nominal,mean_lower,se_lower,\
             mean_upper,se_upper,mean_width,se_width,mean_excess_width,se_excess_width,\
             coverage,se_coverage,degenerate\n",
        );
        let o = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.rows {
            let cells = [
                r.method.to_string(),
                (r.input + 1).to_string(),
                r.name.clone(),
                r.budget.to_string(),
                r.n.to_string(),
                r.trials.to_string(),
                r.skipped.to_string(),
                fmt_f64(r.truth),
                fmt_f64(r.nominal),
                o(r.mean_lower),
                o(r.se_lower),
                o(r.mean_upper),
                o(r.se_upper),
                o(r.mean_width),
                o(r.se_width),
                o(r.mean_excess_width),
                o(r.se_excess_width),
                o(r.coverage),
                o(r.se_coverage),
                r.degenerate.to_string(),
            ];
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Builds the model, surrogate and ground truth, then runs the trials.
pub fn run_coverage_experiment(config: &ExperimentConfig) -> Result<CoverageReport> {
    config.validate()?;
    let model = config.model.build()?;
    let space = model.input_space();
    let master = SeedStream::new(config.seed);
    let built = build_surrogate(&config.surrogate, &*model, &space, master.derive("surrogate", 0).seed())?;
    let truth = reference_truth(config, &*model, &space)?;
    let setup = Setup {
        model: &*model,
        space,
        surrogate: &*built.surrogate,
        surrogate_report: built.report,
        truth,
    };
    run_with(config, &setup)
}

/// Ground truth as configured: the closed form when allowed and known,
/// otherwise a large pick-freeze run.
pub fn reference_truth(config: &ExperimentConfig, model: &dyn Model, space: &InputSpace) -> Result<GroundTruth> {
    if config.truth.closed_form {
        if let Some(t) = closed_form_truth(model) {
            return Ok(t);
        }
    }
    let seed = SeedStream::new(config.seed).derive("ground-truth", 0).seed();
    ground_truth(model, space, config.truth.n_large, seed)
}

/// Trials and summary against a prepared setup.
pub fn run_with(config: &ExperimentConfig, setup: &Setup<'_>) -> Result<CoverageReport> {
    config.validate()?;
    let outcomes = run_trials(config, setup)?;
    Ok(summarize(config, setup, outcomes))
}

/// Runs every (trial, budget, method) and checks each method's model-call
/// count against its plan. Results come back in trial order regardless of
/// scheduling.
pub fn run_trials(config: &ExperimentConfig, setup: &Setup<'_>) -> Result<Vec<TrialOutcome>> {
    let registry = MethodRegistry::default();
    let methods = config
        .methods
        .iter()
        .map(|m| registry.get(m.as_str()))
        .collect::<Result<Vec<_>>>()?;
    let d = setup.space.dim();
    if setup.model.dim() != d || setup.surrogate.dim() != d {
        return Err(Error::invalid("model, surrogate and space disagree on the input count"));
    }
    let master = SeedStream::new(config.seed);
    let per_trial = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let design_seed = match config.protocol {
                Protocol::Fresh => master.derive("trial-design", t as u64).seed(),
                Protocol::FreshResamples => master.derive("trial-design", 0).seed(),
            };
            let resample_seed = master.derive("trial-resample", t as u64).seed();
            let mut out = Vec::with_capacity(config.budgets.len() * methods.len());
            for &budget in &config.budgets {
                let plan = BudgetPlan::new(budget, d);
                for m in &methods {
                    if !plan.feasible(*m) {
                        out.push(TrialOutcome {
                            trial: t,
                            budget,
                            method: m.tag(),
                            skipped: true,
                            model_evaluations: 0,
                            intervals: Vec::new(),
                        });
                        continue;
                    }
                    let counted = CountingModel::new(setup.model);
                    let ctx = TrialContext {
                        model: &counted,
                        space: &setup.space,
                        surrogate: setup.surrogate,
                        budget,
                        k: config.k,
                        alpha: config.alpha,
                        design: config.design,
                        design_seed,
                        resample_seed,
                    };
                    let intervals = m.run(&ctx)?;
                    let planned = plan.model_evaluations(*m);
                    if counted.count() != planned {
                        return Err(Error::Ledger {
                            method: m.name().to_string(),
                            planned,
                            counted: counted.count(),
                        });
                    }
                    out.push(TrialOutcome {
                        trial: t,
                        budget,
                        method: m.tag(),
                        skipped: false,
                        model_evaluations: counted.count(),
                        intervals,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// Aggregates outcomes in trial order, so the report is bit-identical for a
/// given configuration.
pub fn summarize(config: &ExperimentConfig, setup: &Setup<'_>, outcomes: Vec<TrialOutcome>) -> CoverageReport {
    let d = setup.space.dim();
    let names: Vec<String> = setup.space.names().iter().map(|s| s.to_string()).collect();
    let truth = setup.truth.reference().to_vec();
    let registry = MethodRegistry::default();
    let mut rows = Vec::new();
    let mut ledger = Vec::new();
    for &method in &config.methods {
        let m = registry.get(method.as_str()).expect("registered");
        for &budget in &config.budgets {
            let plan = BudgetPlan::new(budget, d);
            let runs: Vec<&TrialOutcome> = outcomes
                .iter()
                .filter(|o| o.method == method && o.budget == budget && !o.skipped)
                .collect();
            ledger.push(LedgerEntry {
                method,
                budget,
                planned_per_trial: if plan.feasible(m) { plan.model_evaluations(m) } else { 0 },
                counted_total: runs.iter().map(|o| o.model_evaluations).sum(),
                trials: runs.len(),
            });
            for j in 0..d {
                let iv: Vec<&IntervalResult> = runs.iter().map(|o| &o.intervals[j]).collect();
                let stat = |f: &dyn Fn(&IntervalResult) -> f64| -> (Option<f64>, Option<f64>) {
                    if iv.is_empty() {
                        return (None, None);
                    }
                    let v: Vec<f64> = iv.iter().map(|r| f(r)).collect();
                    let (mean, se) = mean_and_se(&v);
                    (Some(mean), se)
                };
                let (mean_lower, se_lower) = stat(&|r| r.lower);
                let (mean_upper, se_upper) = stat(&|r| r.upper);
                let (mean_width, se_width) = stat(&|r| r.width());
                let (mean_excess_width, se_excess_width) = if method == MethodTag::Floodgate {
                    stat(&|r| r.width() - (r.point_upper - r.point_lower))
                } else {
                    (None, None)
                };
                let s = truth[j];
                let (coverage, se_coverage) = stat(&|r| if r.covers(s) { 1.0 } else { 0.0 });
                rows.push(CoverageRow {
                    method,
                    input: j,
                    name: names[j].clone(),
                    budget,
                    n: plan.sample_size(m),
                    trials: iv.len(),
                    skipped: iv.is_empty(),
                    truth: s,
                    nominal: 1.0 - config.alpha,
                    mean_lower,
                    se_lower,
                    mean_upper,
                    se_upper,
                    mean_width,
                    se_width,
                    mean_excess_width,
                    se_excess_width,
                    coverage,
                    se_coverage,
                    degenerate: iv.iter().filter(|r| r.diagnostics.degenerate).count(),
                });
            }
        }
    }
    CoverageReport {
        config: config.clone(),
        input_names: names,
        truth: setup.truth.clone(),
        surrogate: setup.surrogate_report.clone(),
        rows,
        ledger,
        trials: config.keep_trials.then_some(outcomes),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub method: MethodTag,
    pub input: usize,
    pub name: String,
    /// Least-squares slope of log mean width on log sample size.
    pub width_slope: Option<f64>,
    pub excess_slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthCurve {
    pub rows: Vec<CoverageRow>,
    pub slopes: Vec<SlopeRow>,
}

impl WidthCurve {
    pub fn slope(&self, method: MethodTag, input: usize) -> Option<&SlopeRow> {
        self.slopes.iter().find(|s| s.method == method && s.input == input)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# format_version={}\n", crate::io::FORMAT_VERSION);
        out.push_str("method,input,name,budget,n,trials,mean_width,se_width,mean_excess_width,se_excess_width\n");
        let o = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.rows {
            out.push_str(
                &[
                    r.method.to_string(),
                    (r.input + 1).to_string(),
                    r.name.clone(),
                    r.budget.to_string(),
                    r.n.to_string(),
                    r.trials.to_string(),
                    o(r.mean_width),
                    o(r.se_width),
                    o(r.mean_excess_width),
                    o(r.se_excess_width),
                ]
                .join(","),
            );
            out.push('\n');
        }
        out
    }

    pub fn slopes_csv(&self) -> String {
        let mut out = format!("# format_version={}\n", crate::io::FORMAT_VERSION);
        out.push_str("method,input,name,width_slope,excess_slope\n");
        let o = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for s in &self.slopes {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.method,
                s.input + 1,
                s.name,
                o(s.width_slope),
                o(s.excess_slope)
            ));
        }
        out
    }
}

/// Mean widths against sample size with fitted log-log slopes.
pub fn width_curve(report: &CoverageReport) -> WidthCurve {
    let mut slopes = Vec::new();
    for &method in &report.config.methods {
        for (j, name) in report.input_names.iter().enumerate() {
            let pts: Vec<&CoverageRow> = report
                .rows
                .iter()
                .filter(|r| r.method == method && r.input == j && !r.skipped)
                .collect();
            let fit = |get: &dyn Fn(&CoverageRow) -> Option<f64>| {
                let (x, y): (Vec<f64>, Vec<f64>) = pts
                    .iter()
                    .filter_map(|r| get(r).filter(|v| *v > 0.0).map(|v| ((r.n as f64).ln(), v.ln())))
                    .unzip();
                ols_slope(&x, &y)
            };
            slopes.push(SlopeRow {
                method,
                input: j,
                name: name.clone(),
                width_slope: fit(&|r| r.mean_width),
                excess_slope: fit(&|r| r.mean_excess_width),
            });
        }
    }
    WidthCurve {
        rows: report.rows.clone(),
        slopes,
    }
}

pub fn run_width_curve(config: &ExperimentConfig) -> Result<(CoverageReport, WidthCurve)> {
    let report = run_coverage_experiment(config)?;
    let curve = width_curve(&report);
    Ok((report, curve))
}
