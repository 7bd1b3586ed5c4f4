//! Interval methods behind one trait, looked up by name at run time.
//!
//! Every method spends a budget of `N` model evaluations differently; the
//! per-method sample size and the exact number of model calls are part of
//! the trait so callers can audit the ledger.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::EvaluatedDataset;
use crate::error::{Error, Result};
use crate::estimators::panin::panin_terms_from_block;
use crate::estimators::{
    floodgate_all_inputs, pair_design, panin_interval, spf_jansen, spf_surrogate,
    IntervalResult, MethodTag,
};
use crate::models::Model;
use crate::space::{resample_conditional, sample_iid, sample_lhs_batches, InputSpace, SampleMatrix};
use crate::surrogate::Surrogate;

/// How the `N` base points of floodgate and Panin are drawn. Pick-freeze
/// pairs always use i.i.d. base points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Design {
    #[default]
    Iid,
    /// Independent Latin hypercubes of `batch_size` points; `N` must be a
    /// multiple of it and intervals use batch means.
    LhsBatches { batch_size: usize },
}

impl Design {
    pub fn draw(&self, space: &InputSpace, n: usize, seed: u64) -> Result<SampleMatrix> {
        match *self {
            Design::Iid => sample_iid(space, n, seed),
            Design::LhsBatches { batch_size } => {
                if batch_size == 0 || !n.is_multiple_of(batch_size) {
                    return Err(Error::invalid(format!(
                        "budget {n} is not a multiple of the batch size {batch_size}"
                    )));
                }
                sample_lhs_batches(space, batch_size, n / batch_size, seed)
            }
        }
    }
}

/// Inputs shared by all methods for one trial.
pub struct TrialContext<'a> {
    pub model: &'a dyn Model,
    pub space: &'a InputSpace,
    pub surrogate: &'a dyn Surrogate,
    /// Model-evaluation budget `N`.
    pub budget: usize,
    pub k: usize,
    pub alpha: f64,
    pub design: Design,
    /// Methods given the same seeds see the same base points and the same
    /// first redraws.
    pub design_seed: u64,
    pub resample_seed: u64,
}

pub trait IntervalMethod: Send + Sync {
    fn tag(&self) -> MethodTag;

    fn name(&self) -> &'static str {
        self.tag().as_str()
    }

    /// Number of base points (or pairs) used under budget `N`.
    fn sample_size(&self, budget: usize, d: usize) -> usize;

    /// Model evaluations consumed under budget `N`.
    fn model_evaluations(&self, budget: usize, d: usize) -> u64;

    /// Intervals for every input.
    fn run(&self, ctx: &TrialContext<'_>) -> Result<Vec<IntervalResult>>;
}

fn need(n: usize, what: &str, budget: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "budget {budget} leaves {n} {what}; at least 2 are needed"
        )));
    }
    Ok(())
}

pub struct Floodgate;

impl IntervalMethod for Floodgate {
    fn tag(&self) -> MethodTag {
        MethodTag::Floodgate
    }

    fn sample_size(&self, budget: usize, _d: usize) -> usize {
        budget
    }

    fn model_evaluations(&self, budget: usize, _d: usize) -> u64 {
        budget as u64
    }

    fn run(&self, ctx: &TrialContext<'_>) -> Result<Vec<IntervalResult>> {
        need(ctx.budget, "points", ctx.budget)?;
        let x = ctx.design.draw(ctx.space, ctx.budget, ctx.design_seed)?;
        let data = EvaluatedDataset::evaluate(ctx.model, x)?;
        floodgate_all_inputs(&data, ctx.surrogate, ctx.space, ctx.k, ctx.resample_seed, ctx.alpha)
    }
}

/// Jansen pick-freeze on the model: `⌊N/(d+1)⌋` pairs.
pub struct Spf;

impl IntervalMethod for Spf {
    fn tag(&self) -> MethodTag {
        MethodTag::Spf
    }

    fn sample_size(&self, budget: usize, d: usize) -> usize {
        budget / (d + 1)
    }

    fn model_evaluations(&self, budget: usize, d: usize) -> u64 {
        (self.sample_size(budget, d) * (d + 1)) as u64
    }

    fn run(&self, ctx: &TrialContext<'_>) -> Result<Vec<IntervalResult>> {
        let d = ctx.space.dim();
        let n = self.sample_size(ctx.budget, d);
        need(n, "pairs", ctx.budget)?;
        let x = sample_iid(ctx.space, n, ctx.design_seed)?;
        let pairs = pair_design(&|x| ctx.model.evaluate(x), x, ctx.space, ctx.resample_seed)?;
        (0..d).map(|j| spf_jansen(&pairs, j, ctx.alpha)).collect()
    }
}

/// Jansen pick-freeze on the surrogate with `N` pairs and no model calls.
pub struct SpfSurrogate;

impl IntervalMethod for SpfSurrogate {
    fn tag(&self) -> MethodTag {
        MethodTag::SpfSurrogate
    }

    fn sample_size(&self, budget: usize, _d: usize) -> usize {
        budget
    }

    fn model_evaluations(&self, _budget: usize, _d: usize) -> u64 {
        0
    }

    fn run(&self, ctx: &TrialContext<'_>) -> Result<Vec<IntervalResult>> {
        need(ctx.budget, "pairs", ctx.budget)?;
        let x = sample_iid(ctx.space, ctx.budget, ctx.design_seed)?;
        let s = ctx.surrogate;
        let pairs = pair_design(&|x| s.predict(x), x, ctx.space, ctx.resample_seed)?;
        (0..ctx.space.dim())
            .map(|j| spf_surrogate(&pairs, j, ctx.alpha))
            .collect()
    }
}

/// Surrogate-error bound around the surrogate index; `N` model calls
/// estimate the error, `N` surrogate pairs estimate the index.
pub struct Panin;

impl IntervalMethod for Panin {
    fn tag(&self) -> MethodTag {
        MethodTag::Panin
    }

    fn sample_size(&self, budget: usize, _d: usize) -> usize {
        budget
    }

    fn model_evaluations(&self, budget: usize, _d: usize) -> u64 {
        budget as u64
    }

    fn run(&self, ctx: &TrialContext<'_>) -> Result<Vec<IntervalResult>> {
        need(ctx.budget, "points", ctx.budget)?;
        let x = ctx.design.draw(ctx.space, ctx.budget, ctx.design_seed)?;
        let data = EvaluatedDataset::evaluate(ctx.model, x)?;
        let base = ctx.surrogate.predict_rows(&data.inputs);
        (0..ctx.space.dim())
            .into_par_iter()
            .map(|j| {
                let block = resample_conditional(ctx.space, &data.inputs, j, 1, ctx.resample_seed)?;
                let terms = panin_terms_from_block(&data, &base, ctx.surrogate, &block)?;
                panin_interval(&terms, ctx.alpha)
            })
            .collect()
    }
}

/// Name-keyed method table.
pub struct MethodRegistry {
    methods: BTreeMap<&'static str, Box<dyn IntervalMethod>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        MethodRegistry {
            methods: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, m: Box<dyn IntervalMethod>) {
        self.methods.insert(m.name(), m);
    }

    pub fn get(&self, name: &str) -> Result<&dyn IntervalMethod> {
        self.methods
            .get(name)
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::Unknown {
                kind: "method",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.keys().copied().collect()
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut r = MethodRegistry::empty();
        r.register(Box::new(Floodgate));
        r.register(Box::new(Spf));
        r.register(Box::new(SpfSurrogate));
        r.register(Box::new(Panin));
        r
    }
}
