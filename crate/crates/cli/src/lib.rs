//! The `floodgate` command line.
//!
//! Every command writes its results and a `manifest.json` into `--out`.
//! Usage errors exit with status 2, failed validation or I/O with status 1
//! and a single `error: ...` line on stderr.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use floodgate::estimators::{
    floodgate_query_points, pair_design, panin_interval, panin_terms, spf_jansen, spf_surrogate,
    IntervalResult, MethodTag,
};
use floodgate::harness::{
    apply_to_existing_dataset, build_surrogate, ground_truth, run_coverage_experiment,
    width_curve, BudgetPlan, ExperimentConfig, SurrogateReport, SurrogateSpec,
};
use floodgate::io::{self, RunManifest};
use floodgate::methods::{Design, MethodRegistry, TrialContext};
use floodgate::models::{CountingModel, Model, ModelSpec};
use floodgate::rng::SeedStream;
use floodgate::space::{sample_iid, InputSpace, SampleMatrix};
use floodgate::surrogate::{
    tune_krr, KrrModel, LinearSurrogate, ModelSurrogate, Surrogate, TabulatedSurrogate,
};
use floodgate::{Error, EvaluatedDataset, Result};

#[derive(Parser, Debug)]
#[command(name = "floodgate", version, about = "Confidence intervals for total-order sensitivity indices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw an input design, or export the surrogate query points of a dataset.
    Sample(SampleArgs),
    /// Run a built-in model over a design.
    Evaluate(EvaluateArgs),
    /// Fit a kernel ridge surrogate and save it.
    TrainSurrogate(TrainArgs),
    /// Floodgate intervals, on a fresh budget or an existing dataset.
    Floodgate(IntervalArgs),
    /// Pick-freeze intervals from model pairs.
    Spf(IntervalArgs),
    /// Pick-freeze intervals from surrogate pairs.
    SpfSurrogate(IntervalArgs),
    /// Intervals from the surrogate-error bound.
    Panin(IntervalArgs),
    /// Repeated trials scored against ground truth.
    Coverage(ExperimentArgs),
    /// Mean interval widths against budget, with log-log slopes.
    WidthCurve(ExperimentArgs),
    /// Large-sample reference indices.
    GroundTruth(TruthArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON config; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    common: Common,
    /// Model whose input space is sampled, e.g. `ishigami` or `hymod`.
    #[arg(long)]
    model: Option<String>,
    /// Input space as JSON, instead of a model's.
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// Stack independent Latin hypercubes of this size.
    #[arg(long)]
    lhs_batch: Option<usize>,
    /// Export every point floodgate will query on this dataset.
    #[arg(long)]
    from_dataset: Option<PathBuf>,
    #[arg(long = "K")]
    k: Option<usize>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<String>,
    /// Design CSV with columns x_1..x_d[,batch].
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<String>,
    /// `high`, `low`, `tier:<rel-mse>` or `krr:<train-size>`.
    #[arg(long)]
    surrogate: Option<String>,
    /// Fit on an existing dataset instead (last fifth held out for tuning).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IntervalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<String>,
    /// `exact`, `high`, `low`, `tier:<t>`, `krr:<n>`, `file:<krr.json>` or
    /// `table:<predictions.csv>`.
    #[arg(long)]
    surrogate: Option<String>,
    /// Model-evaluation budget N.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "K")]
    k: Option<usize>,
    /// Existing dataset; no model runs are made.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long)]
    lhs_batch: Option<usize>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    surrogate: Option<String>,
    /// Comma-separated ascending budgets.
    #[arg(long, value_delimiter = ',')]
    budget: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "K")]
    k: Option<usize>,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct TruthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    n_large: Option<usize>,
}

/// Settings for the single-run commands, from `--config` and flags.
#[derive(Debug, Default, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    surrogate: Option<SurrogateChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    space: Option<InputSpace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    from_dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lhs_batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_large: Option<usize>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
enum SurrogateChoice {
    Table { table: PathBuf },
    Spec(SurrogateSpec),
}

fn parse_surrogate(s: &str) -> Result<SurrogateChoice> {
    match s.strip_prefix("table:") {
        Some(p) if !p.is_empty() => Ok(SurrogateChoice::Table { table: p.into() }),
        _ => Ok(SurrogateChoice::Spec(s.parse()?)),
    }
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match execute(argv) {
        Ok(()) => 0,
        Err(Failure::Usage(e)) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
        Err(Failure::Failed(line)) => {
            eprintln!("{line}");
            1
        }
    }
}

enum Failure {
    /// Usage text, help or version from the argument parser.
    Usage(clap::Error),
    /// One `error: ...` line.
    Failed(String),
}

fn execute<I, T>(argv: I) -> std::result::Result<(), Failure>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&argv).map_err(Failure::Usage)?;
    let args: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    dispatch(cli.command, args)
        .map_err(|e| Failure::Failed(format!("error: {}", e.to_string().replace('\n', " "))))
}

fn dispatch(command: Command, argv: Vec<String>) -> Result<()> {
    match command {
        Command::Sample(a) => sample(a, argv),
        Command::Evaluate(a) => evaluate(a, argv),
        Command::TrainSurrogate(a) => train(a, argv),
        Command::Floodgate(a) => interval(MethodTag::Floodgate, a, argv),
        Command::Spf(a) => interval(MethodTag::Spf, a, argv),
        Command::SpfSurrogate(a) => interval(MethodTag::SpfSurrogate, a, argv),
        Command::Panin(a) => interval(MethodTag::Panin, a, argv),
        Command::Coverage(a) => experiment(false, a, argv),
        Command::WidthCurve(a) => experiment(true, a, argv),
        Command::GroundTruth(a) => truth(a, argv),
    }
}

fn run_config(common: &Common) -> Result<RunConfig> {
    let mut c: RunConfig = match &common.config {
        Some(p) => io::load_json(p)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        c.seed = common.seed;
    }
    Ok(c)
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn parse_model(s: Option<String>) -> Result<Option<ModelSpec>> {
    s.map(|m| m.parse()).transpose()
}

fn need<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidArgument(format!("missing {what}")))
}

/// Stream seeds for one run: base design, resamples, surrogate training.
struct Seeds {
    design: u64,
    resample: u64,
    surrogate: u64,
}

fn seeds(seed: u64) -> Seeds {
    let s = SeedStream::new(seed);
    Seeds {
        design: s.derive("design", 0).seed(),
        resample: s.derive("resample", 0).seed(),
        surrogate: s.derive("surrogate", 0).seed(),
    }
}

fn space_for(c: &RunConfig, model: Option<&dyn Model>) -> Result<InputSpace> {
    match (&c.space, model) {
        (Some(s), Some(m)) if s.dim() != m.dim() => Err(Error::InvalidArgument(format!(
            "space has {} inputs but model `{}` takes {}",
            s.dim(),
            m.name(),
            m.dim()
        ))),
        (Some(s), _) => Ok(s.clone()),
        (None, Some(m)) => Ok(m.input_space()),
        (None, None) => Err(Error::InvalidArgument(
            "need --model or --space to know the input distribution".into(),
        )),
    }
}

fn load_space(path: Option<PathBuf>) -> Result<Option<InputSpace>> {
    path.map(io::load_json).transpose()
}

struct Output {
    dir: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

impl Output {
    fn new(dir: &Path, command: &str, argv: Vec<String>, config: Value, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        let mut manifest = RunManifest::new(command, argv, config);
        manifest.seeds.insert("seed".into(), seed);
        Ok(Output {
            dir: dir.to_path_buf(),
            manifest,
            started: Instant::now(),
        })
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        io::write_csv_text(text, self.dir.join(name))?;
        self.manifest.outputs.push(name.into());
        Ok(())
    }

    fn json<T: serde::Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        io::write_json(v, self.dir.join(name))?;
        self.manifest.outputs.push(name.into());
        Ok(())
    }

    fn count(&mut self, what: &str, n: u64) {
        *self.manifest.evaluations.entry(what.into()).or_insert(0) += n;
    }

    fn note(&mut self, line: String) {
        eprintln!("{line}");
        self.manifest.notes.push(line);
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        self.manifest.save(&self.dir)
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn sample(a: SampleArgs, argv: Vec<String>) -> Result<()> {
    let mut c = run_config(&a.common)?;
    set(&mut c.model, parse_model(a.model)?);
    set(&mut c.space, load_space(a.space)?);
    set(&mut c.n, a.n);
    set(&mut c.lhs_batch, a.lhs_batch);
    set(&mut c.from_dataset, a.from_dataset);
    set(&mut c.k, a.k);
    let seed = c.seed.unwrap_or(0);
    let model = c.model.as_ref().map(|m| m.build()).transpose()?;
    let space = space_for(&c, model.as_deref())?;
    let mut out = Output::new(&a.common.out, "sample", argv, to_value(&c), seed)?;
    let s = seeds(seed);
    match &c.from_dataset {
        Some(path) => {
            let data = io::load_dataset(path)?;
            let k = c.k.unwrap_or(1);
            let q = floodgate_query_points(&data.inputs, &space, k, s.resample)?;
            out.note(format!(
                "exported {} query points ({} rows x (1 + {} inputs x K={k})); evaluate the surrogate there and pass the table as --surrogate table:<file> with the same --seed and --K",
                q.rows(),
                data.rows(),
                space.dim()
            ));
            out.text("query_points.csv", &io::sample_matrix_to_csv(&q))?;
        }
        None => {
            let n = need(c.n, "--n")?;
            let design = match c.lhs_batch {
                Some(b) => Design::LhsBatches { batch_size: b },
                None => Design::Iid,
            };
            let m = design.draw(&space, n, s.design)?;
            out.text("samples.csv", &io::sample_matrix_to_csv(&m))?;
        }
    }
    out.finish()
}

fn evaluate(a: EvaluateArgs, argv: Vec<String>) -> Result<()> {
    let mut c = run_config(&a.common)?;
    set(&mut c.model, parse_model(a.model)?);
    set(&mut c.input, a.input);
    let spec = need(c.model.clone(), "--model")?;
    let model = spec.build()?;
    let x = io::load_sample_matrix(need(c.input.clone(), "--input")?)?;
    let space = model.input_space();
    if x.dim() != space.dim() {
        return Err(Error::InvalidArgument(format!(
            "design has {} columns, model `{}` takes {}",
            x.dim(),
            model.name(),
            space.dim()
        )));
    }
    if let Some(i) = (0..x.rows()).find(|&i| !space.contains(x.row(i))) {
        return Err(Error::InvalidArgument(format!(
            "design row {} lies outside the input space of `{}`",
            i + 1,
            model.name()
        )));
    }
    let mut out = Output::new(&a.common.out, "evaluate", argv, to_value(&c), c.seed.unwrap_or(0))?;
    let counted = CountingModel::new(&*model);
    let mut data = EvaluatedDataset::evaluate(&counted, x)?;
    data.provenance.model = Some(format!("{spec:?}"));
    out.count(model.name(), counted.count());
    out.text("dataset.csv", &io::dataset_to_csv(&data)?)?;
    out.finish()
}

fn train(a: TrainArgs, argv: Vec<String>) -> Result<()> {
    let mut c = run_config(&a.common)?;
    set(&mut c.model, parse_model(a.model)?);
    set(&mut c.surrogate, a.surrogate.as_deref().map(parse_surrogate).transpose()?);
    set(&mut c.data, a.data);
    let seed = c.seed.unwrap_or(0);
    let mut out = Output::new(&a.common.out, "train-surrogate", argv, to_value(&c), seed)?;
    if let Some(path) = &c.data {
        let data = io::load_dataset(path)?;
        let n = data.rows();
        let cut = n - n / 5;
        if n / 5 < 2 || cut < 2 {
            return Err(Error::InvalidArgument(format!(
                "dataset has {n} rows; need at least 10 to hold out a fifth"
            )));
        }
        let split = |r: std::ops::Range<usize>| -> Result<EvaluatedDataset> {
            let d = data.dim();
            let vals = data.inputs.values()[r.start * d..r.end * d].to_vec();
            EvaluatedDataset::new(SampleMatrix::from_rows(d, vals, None)?, data.outputs[r].to_vec())
        };
        let fit = tune_krr(
            &split(0..cut)?,
            &split(cut..n)?,
            &[0.25, 0.5, 1.0, 2.0],
            &[1e-8, 1e-6, 1e-4, 1e-2],
            1000,
            seeds(seed).surrogate,
        )?;
        out.note(format!(
            "held-out relative MSE {:.4} (se {:.4}) on {} rows",
            fit.report.validation.value,
            fit.report.validation.stderr,
            n - cut
        ));
        fit.model.save(a.common.out.join("surrogate.json"))?;
        out.manifest.outputs.push("surrogate.json".into());
        out.json("surrogate_report.json", &fit.report.validation)?;
        return out.finish();
    }
    let spec = need(c.model.clone(), "--model or --data")?;
    let model = spec.build()?;
    let space = model.input_space();
    let choice = c
        .surrogate
        .clone()
        .unwrap_or(SurrogateChoice::Spec(SurrogateSpec::tier(floodgate::harness::HIGH_QUALITY)));
    let SurrogateChoice::Spec(sspec) = choice else {
        return Err(Error::InvalidArgument("a prediction table cannot be trained".into()));
    };
    let counted = CountingModel::new(&*model);
    let built = build_surrogate(&sspec, &counted, &space, seeds(seed).surrogate)?;
    out.count(model.name(), counted.count());
    let Some(k) = built.krr else {
        return Err(Error::InvalidArgument(
            "only kernel ridge surrogates (high, low, tier:, krr:) can be trained".into(),
        ));
    };
    note_quality(&mut out, &built.report);
    k.save(a.common.out.join("surrogate.json"))?;
    out.manifest.outputs.push("surrogate.json".into());
    out.json("surrogate_report.json", &built.report)?;
    out.finish()
}

fn note_quality(out: &mut Output, r: &SurrogateReport) {
    if let Some(q) = &r.test_relative_mse {
        let target = match (r.target, r.achieved) {
            (Some(t), Some(true)) => format!(", target {t} reached"),
            (Some(t), _) => format!(", target {t} NOT reached"),
            _ => String::new(),
        };
        out.note(format!(
            "surrogate {}: training size {}, held-out relative MSE {:.4} (se {:.4}){target}",
            r.kind, r.training_size, q.value, q.stderr
        ));
    }
}

fn interval(method: MethodTag, a: IntervalArgs, argv: Vec<String>) -> Result<()> {
    let mut c = run_config(&a.common)?;
    set(&mut c.model, parse_model(a.model)?);
    set(&mut c.surrogate, a.surrogate.as_deref().map(parse_surrogate).transpose()?);
    set(&mut c.space, load_space(a.space)?);
    set(&mut c.budget, a.budget);
    set(&mut c.alpha, a.alpha);
    set(&mut c.k, a.k);
    set(&mut c.data, a.data);
    set(&mut c.lhs_batch, a.lhs_batch);
    let seed = c.seed.unwrap_or(0);
    let alpha = c.alpha.unwrap_or(0.05);
    let k = c.k.unwrap_or(1);
    let s = seeds(seed);
    let model = c.model.as_ref().map(|m| m.build()).transpose()?;
    let space = space_for(&c, model.as_deref())?;
    let mut out = Output::new(&a.common.out, method.as_str(), argv, to_value(&c), seed)?;

    let data = c.data.as_ref().map(io::load_dataset).transpose()?;
    let surrogate: Option<Box<dyn Surrogate + '_>> = match &c.surrogate {
        None => None,
        Some(SurrogateChoice::Table { table }) => {
            let (pts, preds) = io::load_predictions(table)?;
            let t = TabulatedSurrogate::new(&pts, &preds, table.display().to_string())?;
            if let Some(data) = &data {
                let k = if method == MethodTag::Panin { 1 } else { k };
                check_table_covers(&t, data, &space, k, s.resample)?;
            }
            Some(Box::new(t))
        }
        Some(SurrogateChoice::Spec(SurrogateSpec::File { path })) if model.is_none() => {
            Some(Box::new(KrrModel::load(path)?))
        }
        Some(SurrogateChoice::Spec(SurrogateSpec::Exact)) => {
            let m = need(model.as_deref(), "--model for the exact surrogate")?;
            Some(Box::new(ModelSurrogate(m)))
        }
        Some(SurrogateChoice::Spec(spec)) => {
            let m = model.as_deref().ok_or_else(|| {
                Error::InvalidArgument("this surrogate needs --model (or use file: or table:)".into())
            })?;
            let counted = CountingModel::new(m);
            let built = build_surrogate(spec, &counted, &space, s.surrogate)?;
            out.count("surrogate-checks", counted.count());
            note_quality(&mut out, &built.report);
            let owned: Box<dyn Surrogate> = match (built.krr, spec) {
                (Some(k), _) => Box::new(k),
                (None, SurrogateSpec::Linear { intercept, coeffs }) => Box::new(LinearSurrogate {
                    intercept: *intercept,
                    coeffs: coeffs.clone(),
                }),
                _ => unreachable!("every other surrogate kind is a kernel model"),
            };
            Some(owned)
        }
    };

    let results = match (&data, method) {
        (Some(data), MethodTag::Floodgate) => {
            let sur = need(surrogate.as_deref(), "--surrogate")?;
            out.note(format!(
                "floodgate on existing dataset: {} rows{}, 0 model evaluations",
                data.rows(),
                if data.batch_ids().is_some() { " in batches" } else { "" }
            ));
            apply_to_existing_dataset(data, sur, &space, alpha, k, s.resample)?
        }
        (Some(data), MethodTag::Panin) => {
            let sur = need(surrogate.as_deref(), "--surrogate")?;
            let with_f = data.clone().with_surrogate_outputs(sur.predict_rows(&data.inputs))?;
            out.note(format!(
                "panin on existing dataset: {} rows, 0 model evaluations",
                data.rows()
            ));
            (0..space.dim())
                .map(|j| panin_interval(&panin_terms(&with_f, sur, &space, j, s.resample)?, alpha))
                .collect::<Result<Vec<_>>>()?
        }
        (Some(_), _) => {
            return Err(Error::InvalidArgument(format!(
                "{method} needs pick-freeze pairs; run it with --model and --budget instead of --data"
            )))
        }
        (None, MethodTag::SpfSurrogate) => {
            let sur = need(surrogate.as_deref(), "--surrogate")?;
            let n = need(c.budget, "--budget")?;
            let x = sample_iid(&space, n, s.design)?;
            let pairs = pair_design(&|x| sur.predict(x), x, &space, s.resample)?;
            out.note(format!("spf-surrogate: {n} surrogate pairs, 0 model evaluations"));
            (0..space.dim())
                .map(|j| spf_surrogate(&pairs, j, alpha))
                .collect::<Result<Vec<_>>>()?
        }
        (None, MethodTag::Spf) => {
            let m = need(model.as_deref(), "--model")?;
            let budget = need(c.budget, "--budget")?;
            let plan = BudgetPlan::new(budget, space.dim());
            let registry = MethodRegistry::default();
            let spf = registry.get("spf")?;
            let n = plan.sample_size(spf);
            if n < 2 {
                return Err(Error::InvalidArgument(format!(
                    "budget {budget} gives {n} pairs for d = {}; need N >= {}",
                    space.dim(),
                    2 * (space.dim() + 1)
                )));
            }
            let counted = CountingModel::new(m);
            let x = sample_iid(&space, n, s.design)?;
            let pairs = pair_design(&|x| counted.evaluate(x), x, &space, s.resample)?;
            check_ledger("spf", plan.model_evaluations(spf), counted.count())?;
            out.count(m.name(), counted.count());
            out.note(format!(
                "ledger: spf budget N={budget}, d={}, n={n} pairs, {} model evaluations",
                space.dim(),
                counted.count()
            ));
            (0..space.dim())
                .map(|j| spf_jansen(&pairs, j, alpha))
                .collect::<Result<Vec<_>>>()?
        }
        (None, _) => {
            let m = need(model.as_deref(), "--model (or --data)")?;
            let sur = need(surrogate.as_deref(), "--surrogate")?;
            let budget = need(c.budget, "--budget")?;
            let registry = MethodRegistry::default();
            let im = registry.get(method.as_str())?;
            let plan = BudgetPlan::new(budget, space.dim());
            let counted = CountingModel::new(m);
            let design = match c.lhs_batch {
                Some(b) => Design::LhsBatches { batch_size: b },
                None => Design::Iid,
            };
            let ctx = TrialContext {
                model: &counted,
                space: &space,
                surrogate: sur,
                budget,
                k,
                alpha,
                design,
                design_seed: s.design,
                resample_seed: s.resample,
            };
            let r = im.run(&ctx)?;
            check_ledger(method.as_str(), plan.model_evaluations(im), counted.count())?;
            out.count(m.name(), counted.count());
            out.note(format!(
                "ledger: {method} budget N={budget}, n={}, {} model evaluations",
                plan.sample_size(im),
                counted.count()
            ));
            r
        }
    };
    let names = space.names();
    out.text("intervals.csv", &io::intervals_to_csv(&results, &names))?;
    out.json("intervals.json", &results)?;
    print_intervals(&results, &names);
    out.finish()
}

fn check_ledger(method: &str, planned: u64, counted: u64) -> Result<()> {
    if planned != counted {
        return Err(Error::Ledger {
            method: method.into(),
            planned,
            counted,
        });
    }
    Ok(())
}

/// A prediction table must hold every point floodgate will ask for.
fn check_table_covers(
    table: &TabulatedSurrogate,
    data: &EvaluatedDataset,
    space: &InputSpace,
    k: usize,
    seed: u64,
) -> Result<()> {
    let q = floodgate_query_points(&data.inputs, space, k, seed)?;
    if let Some(i) = (0..q.rows()).find(|&i| table.get(q.row(i)).is_none()) {
        return Err(Error::InvalidArgument(format!(
            "prediction table lacks query point {} of {}; export it with `sample --from-dataset` using the same --seed and --K",
            i + 1,
            q.rows()
        )));
    }
    Ok(())
}

fn print_intervals(results: &[IntervalResult], names: &[&str]) {
    for r in results {
        println!(
            "{:<12} {:<8} [{:.4}, {:.4}]",
            r.method.as_str(),
            names.get(r.input_index).copied().unwrap_or(""),
            r.lower,
            r.upper
        );
    }
}

fn experiment(curve: bool, a: ExperimentArgs, argv: Vec<String>) -> Result<()> {
    let mut cfg: ExperimentConfig = match &a.common.config {
        Some(p) => io::load_json(p)?,
        None => ExperimentConfig::new(
            ModelSpec::Ishigami { a: 7.0, b: 0.1 },
            SurrogateSpec::tier(floodgate::harness::HIGH_QUALITY),
            vec![100, 1000],
            100,
        ),
    };
    if let Some(m) = parse_model(a.model)? {
        cfg.model = m;
    }
    if let Some(s) = &a.surrogate {
        match parse_surrogate(s)? {
            SurrogateChoice::Spec(spec) => cfg.surrogate = spec,
            SurrogateChoice::Table { .. } => {
                return Err(Error::InvalidArgument(
                    "repeated trials need a surrogate that can be queried anywhere, not a table".into(),
                ))
            }
        }
    }
    if let Some(b) = a.budget {
        cfg.budgets = b;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(al) = a.alpha {
        cfg.alpha = al;
    }
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(seed) = a.common.seed {
        cfg.seed = seed;
    }
    if let Some(ms) = a.methods {
        cfg.methods = ms.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    }
    cfg.validate()?;
    let command = if curve { "width-curve" } else { "coverage" };
    let mut out = Output::new(&a.common.out, command, argv, to_value(&cfg), cfg.seed)?;
    let report = run_coverage_experiment(&cfg)?;
    note_quality(&mut out, &report.surrogate);
    out.count("surrogate-training", report.surrogate.model_evaluations);
    out.count("ground-truth", report.truth.model_evaluations);
    for e in &report.ledger {
        out.count(&format!("{}", e.method), e.counted_total);
        out.manifest.notes.push(format!(
            "ledger: {} N={} planned {} per trial x {} trials, counted {}",
            e.method, e.budget, e.planned_per_trial, e.trials, e.counted_total
        ));
    }
    if curve {
        let w = width_curve(&report);
        out.text("widths.csv", &w.to_csv())?;
        out.text("slopes.csv", &w.slopes_csv())?;
        out.json("width_curve.json", &w)?;
        for s in &w.slopes {
            println!(
                "{:<14} {:<8} width slope {}  excess slope {}",
                s.method.as_str(),
                s.name,
                s.width_slope.map_or("-".into(), |v| format!("{v:.3}")),
                s.excess_slope.map_or("-".into(), |v| format!("{v:.3}"))
            );
        }
    } else {
        for r in report.rows.iter().filter(|r| !r.skipped) {
            println!(
                "{:<14} {:<8} N={:<7} coverage {:.3} (nominal {:.2})  mean width {:.4}",
                r.method.as_str(),
                r.name,
                r.budget,
                r.coverage.unwrap_or(f64::NAN),
                r.nominal,
                r.mean_width.unwrap_or(f64::NAN)
            );
        }
    }
    out.text("coverage.csv", &report.to_csv())?;
    out.json("coverage.json", &report)?;
    out.finish()
}

fn truth(a: TruthArgs, argv: Vec<String>) -> Result<()> {
    let mut c = run_config(&a.common)?;
    set(&mut c.model, parse_model(a.model)?);
    set(&mut c.n_large, a.n_large);
    let seed = c.seed.unwrap_or(0);
    let model = need(c.model.clone(), "--model")?.build()?;
    let space = model.input_space();
    let n_large = c.n_large.unwrap_or(1_000_000);
    let mut out = Output::new(&a.common.out, "ground-truth", argv, to_value(&c), seed)?;
    out.note(format!(
        "ground truth: n_large={n_large}, {} model evaluations planned",
        n_large.saturating_mul(space.dim() + 1)
    ));
    let counted = CountingModel::new(&*model);
    let g = ground_truth(&counted, &space, n_large, SeedStream::new(seed).derive("ground-truth", 0).seed())?;
    out.count(model.name(), counted.count());
    let mut csv = format!("# format_version={}\ninput,name,estimate,stderr,closed_form\n", io::FORMAT_VERSION);
    for (j, name) in space.names().iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            j + 1,
            name,
            io::fmt_f64(g.estimate[j]),
            io::fmt_f64(g.stderr[j]),
            g.closed_form.as_ref().map(|c| io::fmt_f64(c[j])).unwrap_or_default()
        ));
        println!("{name:<8} {:.4} ± {:.4}", g.estimate[j], g.stderr[j]);
    }
    out.text("ground_truth.csv", &csv)?;
    out.json("ground_truth.json", &g)?;
    out.finish()
}
