//! Computational models `f*`.

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::InputSpace;

mod analytic;
mod hymod;

pub use analytic::{AdditiveLinear, Constant, Ishigami, SyntheticHighDim};
pub use hymod::{
    hymod_run, hymod_simulate, hymod_space, nse, synthetic_forcing, ForcingSeries, HymodNse,
    HymodParams, HymodRun, HYMOD_RANGES,
};

/// A deterministic scalar model over a declared input space.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Must be bit-for-bit deterministic. `x` is expected inside
    /// [`Model::input_space`].
    fn evaluate(&self, x: &[f64]) -> f64;

    fn input_space(&self) -> InputSpace;

    /// Closed-form total-order indices, when known.
    fn total_indices(&self) -> Option<Vec<f64>> {
        None
    }
}

impl<M: Model + ?Sized> Model for Box<M> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        (**self).evaluate(x)
    }
    fn input_space(&self) -> InputSpace {
        (**self).input_space()
    }
    fn total_indices(&self) -> Option<Vec<f64>> {
        (**self).total_indices()
    }
}

impl<M: Model + ?Sized> Model for &M {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        (**self).evaluate(x)
    }
    fn input_space(&self) -> InputSpace {
        (**self).input_space()
    }
    fn total_indices(&self) -> Option<Vec<f64>> {
        (**self).total_indices()
    }
}

/// Counts every evaluation of the wrapped model.
pub struct CountingModel<'a> {
    inner: &'a dyn Model,
    count: AtomicU64,
}

impl<'a> CountingModel<'a> {
    pub fn new(inner: &'a dyn Model) -> Self {
        CountingModel {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

impl Model for CountingModel<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(x)
    }
    fn input_space(&self) -> InputSpace {
        self.inner.input_space()
    }
    fn total_indices(&self) -> Option<Vec<f64>> {
        self.inner.total_indices()
    }
}

/// Where Hymod gets its forcing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForcingSpec {
    Synthetic {
        #[serde(default = "default_days")]
        days: usize,
        #[serde(default = "default_forcing_seed")]
        seed: u64,
        #[serde(default = "default_noise")]
        noise_sd: f64,
        #[serde(default)]
        true_params: HymodParams,
    },
    File {
        path: PathBuf,
    },
}

fn default_days() -> usize {
    365
}
fn default_forcing_seed() -> u64 {
    2024
}
fn default_noise() -> f64 {
    0.2
}

impl Default for ForcingSpec {
    fn default() -> Self {
        ForcingSpec::Synthetic {
            days: default_days(),
            seed: default_forcing_seed(),
            noise_sd: default_noise(),
            true_params: HymodParams::default(),
        }
    }
}

impl ForcingSpec {
    pub fn load(&self) -> Result<ForcingSeries> {
        match self {
            ForcingSpec::Synthetic {
                days,
                seed,
                noise_sd,
                true_params,
            } => synthetic_forcing(*days, *seed, true_params, *noise_sd),
            ForcingSpec::File { path } => crate::io::load_forcing(path),
        }
    }
}

/// Named model constructors, selectable from config files or the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Ishigami {
        #[serde(default = "default_a")]
        a: f64,
        #[serde(default = "default_b")]
        b: f64,
    },
    Additive {
        coeffs: Vec<f64>,
    },
    Synthetic {
        d: usize,
        #[serde(default)]
        seed: u64,
    },
    Constant {
        d: usize,
        #[serde(default)]
        value: f64,
    },
    Hymod {
        #[serde(default)]
        forcing: ForcingSpec,
    },
}

fn default_a() -> f64 {
    7.0
}
fn default_b() -> f64 {
    0.1
}

pub const MODEL_NAMES: [&str; 5] = ["ishigami", "additive", "synthetic", "constant", "hymod"];

impl ModelSpec {
    pub fn build(&self) -> Result<Box<dyn Model>> {
        Ok(match self {
            ModelSpec::Ishigami { a, b } => Box::new(Ishigami::new(*a, *b)),
            ModelSpec::Additive { coeffs } => Box::new(AdditiveLinear::new(coeffs.clone())?),
            ModelSpec::Synthetic { d, seed } => Box::new(SyntheticHighDim::new(*d, *seed)?),
            ModelSpec::Constant { d, value } => {
                if *d == 0 {
                    return Err(Error::invalid("constant model needs d >= 1"));
                }
                Box::new(Constant { d: *d, value: *value })
            }
            ModelSpec::Hymod { forcing } => Box::new(HymodNse::new(forcing.load()?)?),
        })
    }
}

/// Command-line shorthand: `ishigami[:a,b]`, `additive:c1,c2,..`,
/// `synthetic:d[,seed]`, `constant:d[,value]`, `hymod[:forcing.csv]`.
impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums = || -> Result<Vec<f64>> {
            args.split(',')
                .filter(|a| !a.trim().is_empty())
                .map(|a| {
                    a.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad number `{a}` in model `{s}`")))
                })
                .collect()
        };
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::invalid(format!("expected a whole number in model `{s}`")))
            }
        };
        match name {
            "ishigami" => match nums()?.as_slice() {
                [] => Ok(ModelSpec::Ishigami { a: 7.0, b: 0.1 }),
                [a, b] => Ok(ModelSpec::Ishigami { a: *a, b: *b }),
                _ => Err(Error::invalid("ishigami takes `ishigami:a,b`")),
            },
            "additive" => Ok(ModelSpec::Additive { coeffs: nums()? }),
            "synthetic" => match nums()?.as_slice() {
                [d] => Ok(ModelSpec::Synthetic { d: as_count(*d)?, seed: 0 }),
                [d, seed] => Ok(ModelSpec::Synthetic {
                    d: as_count(*d)?,
                    seed: as_count(*seed)? as u64,
                }),
                _ => Err(Error::invalid("synthetic takes `synthetic:d[,seed]`")),
            },
            "constant" => match nums()?.as_slice() {
                [d] => Ok(ModelSpec::Constant { d: as_count(*d)?, value: 0.0 }),
                [d, v] => Ok(ModelSpec::Constant { d: as_count(*d)?, value: *v }),
                _ => Err(Error::invalid("constant takes `constant:d[,value]`")),
            },
            "hymod" if args.is_empty() => Ok(ModelSpec::Hymod {
                forcing: ForcingSpec::default(),
            }),
            "hymod" => Ok(ModelSpec::Hymod {
                forcing: ForcingSpec::File { path: args.into() },
            }),
            other => Err(Error::Unknown {
                kind: "model",
                name: other.to_string(),
            }),
        }
    }
}
