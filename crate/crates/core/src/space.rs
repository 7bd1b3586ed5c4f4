//! Input spaces, sampling designs and conditional resampling.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Marginal law of a single input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Uniform { min: f64, max: f64 },
}

impl Distribution {
    /// Inverse CDF applied to `u` in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Distribution::Uniform { min, max } => min + (max - min) * u,
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Distribution::Uniform { min, max } => (min, max),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.support();
        x >= lo && x <= hi
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Uniform { min, max } => 0.5 * (min + max),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Distribution::Uniform { min, max } => (max - min).powi(2) / 12.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    fn validate(&self, name: &str) -> Result<()> {
        match *self {
            Distribution::Uniform { min, max } => {
                if !(min.is_finite() && max.is_finite()) {
                    return Err(Error::invalid(format!("input `{name}`: bounds must be finite")));
                }
                if min >= max {
                    return Err(Error::invalid(format!(
                        "input `{name}`: need min < max, got [{min}, {max}]"
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputMarginal {
    pub name: String,
    pub distribution: Distribution,
}

impl InputMarginal {
    pub fn uniform(name: impl Into<String>, min: f64, max: f64) -> Self {
        InputMarginal {
            name: name.into(),
            distribution: Distribution::Uniform { min, max },
        }
    }
}

/// Joint input distribution. Only independent inputs are supported; dependent
/// designs go through [`ConditionalSampler`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInputSpace")]
pub struct InputSpace {
    inputs: Vec<InputMarginal>,
    independent: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInputSpace {
    inputs: Vec<InputMarginal>,
    #[serde(default = "yes")]
    independent: bool,
}

fn yes() -> bool {
    true
}

impl TryFrom<RawInputSpace> for InputSpace {
    type Error = Error;

    fn try_from(raw: RawInputSpace) -> Result<Self> {
        if !raw.independent {
            return Err(Error::invalid(
                "dependent input spaces need a user-supplied conditional sampler",
            ));
        }
        InputSpace::new(raw.inputs)
    }
}

impl InputSpace {
    pub fn new(inputs: Vec<InputMarginal>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::invalid("input space needs at least one input"));
        }
        for (i, m) in inputs.iter().enumerate() {
            m.distribution.validate(&m.name)?;
            if inputs[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::invalid(format!("duplicate input name `{}`", m.name)));
            }
        }
        Ok(InputSpace {
            inputs,
            independent: true,
        })
    }

    /// `d` independent uniform(0, 1) inputs named `x_1..x_d`.
    pub fn unit_cube(d: usize) -> Result<Self> {
        InputSpace::new(
            (1..=d)
                .map(|i| InputMarginal::uniform(format!("x_{i}"), 0.0, 1.0))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_independent(&self) -> bool {
        self.independent
    }

    pub fn inputs(&self) -> &[InputMarginal] {
        &self.inputs
    }

    pub fn marginal(&self, j: usize) -> &Distribution {
        &self.inputs[j].distribution
    }

    pub fn names(&self) -> Vec<&str> {
        self.inputs.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn contains(&self, row: &[f64]) -> bool {
        row.len() == self.dim()
            && row
                .iter()
                .zip(&self.inputs)
                .all(|(x, m)| m.distribution.contains(*x))
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j >= self.dim() {
            return Err(Error::invalid(format!(
                "input index {j} out of range for dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Row-major `n x d` design, optionally split into contiguous equal batches.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
    /// Seed of the stream that produced the rows; `None` for loaded data.
    pub seed: Option<u64>,
    batch_ids: Option<Vec<u32>>,
}

impl SampleMatrix {
    pub fn from_rows(d: usize, values: Vec<f64>, seed: Option<u64>) -> Result<Self> {
        if d == 0 || !values.len().is_multiple_of(d) {
            return Err(Error::invalid(format!(
                "{} values do not form rows of width {d}",
                values.len()
            )));
        }
        Ok(SampleMatrix {
            n: values.len() / d,
            d,
            values,
            seed,
            batch_ids: None,
        })
    }

    pub fn with_batches(mut self, batch_ids: Vec<u32>) -> Result<Self> {
        validate_batches(&batch_ids, self.n)?;
        self.batch_ids = Some(batch_ids);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iter_rows().map(|r| r[j]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn batch_ids(&self) -> Option<&[u32]> {
        self.batch_ids.as_deref()
    }
}

/// Batches must be contiguous runs of equal length.
pub fn validate_batches(batch_ids: &[u32], n: usize) -> Result<()> {
    if batch_ids.len() != n {
        return Err(Error::invalid(format!(
            "{} batch labels for {n} rows",
            batch_ids.len()
        )));
    }
    let runs = batch_runs(batch_ids);
    let first = runs.first().map(|r| r.len()).unwrap_or(0);
    let mut seen = std::collections::HashSet::new();
    for r in &runs {
        if !seen.insert(batch_ids[r.start]) {
            return Err(Error::invalid(format!(
                "batch {} is not contiguous",
                batch_ids[r.start]
            )));
        }
        if r.len() != first {
            return Err(Error::invalid(format!(
                "batch {} has {} rows, expected {first}",
                batch_ids[r.start],
                r.len()
            )));
        }
    }
    Ok(())
}

pub(crate) fn batch_runs(batch_ids: &[u32]) -> Vec<std::ops::Range<usize>> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=batch_ids.len() {
        if i == batch_ids.len() || batch_ids[i] != batch_ids[start] {
            runs.push(start..i);
            start = i;
        }
    }
    runs
}

/// `K` conditional draws of input `j` for each of the `n` rows of a design.
#[derive(Clone, Debug, PartialEq)]
pub struct ResampleBlock {
    pub input_index: usize,
    pub k: usize,
    values: Vec<f64>,
    pub seed: u64,
}

impl ResampleBlock {
    pub fn new(input_index: usize, k: usize, values: Vec<f64>, seed: u64) -> Result<Self> {
        if k == 0 || !values.len().is_multiple_of(k) {
            return Err(Error::invalid("resample block needs K >= 1 draws per row"));
        }
        Ok(ResampleBlock {
            input_index,
            k,
            values,
            seed,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.k
    }

    /// The `K` draws for row `i`.
    pub fn draws(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Draws `X_j` given the other coordinates of a row. Needed only for
/// dependent inputs; independent spaces resample from the marginal.
pub trait ConditionalSampler: Send + Sync {
    fn sample(&self, j: usize, row: &[f64], rng: &mut dyn RngCore) -> f64;
}

/// Marginal draws; exact for independent inputs.
pub struct IndependentSampler<'a>(pub &'a InputSpace);

impl ConditionalSampler for IndependentSampler<'_> {
    fn sample(&self, j: usize, _row: &[f64], rng: &mut dyn RngCore) -> f64 {
        self.0.marginal(j).sample(rng)
    }
}

pub fn sample_iid(space: &InputSpace, n: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let mut rng = SeedStream::new(seed).rng("sample-iid", 0);
    let d = space.dim();
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n {
        for m in space.inputs() {
            values.push(m.distribution.sample(&mut rng));
        }
    }
    SampleMatrix::from_rows(d, values, Some(seed))
}

/// Independent randomized Latin hypercubes stacked into one design.
pub fn sample_lhs_batches(
    space: &InputSpace,
    batch_size: usize,
    num_batches: usize,
    seed: u64,
) -> Result<SampleMatrix> {
    if batch_size < 2 {
        return Err(Error::invalid("Latin hypercube batches need at least 2 points"));
    }
    if num_batches == 0 {
        return Err(Error::invalid("need at least one batch"));
    }
    let d = space.dim();
    let stream = SeedStream::new(seed);
    let mut values = vec![0.0; batch_size * num_batches * d];
    let mut strata: Vec<usize> = (0..batch_size).collect();
    for b in 0..num_batches {
        let mut rng = stream.rng("lhs-batch", b as u64);
        let block = &mut values[b * batch_size * d..(b + 1) * batch_size * d];
        for (k, m) in space.inputs().iter().enumerate() {
            strata.shuffle(&mut rng);
            for (i, &s) in strata.iter().enumerate() {
                let u: f64 = rng.random();
                let mut v = s as f64 + u;
                if v >= (s + 1) as f64 {
                    // u rounded up to the next stratum
                    v = s as f64;
                }
                block[i * d + k] = m.distribution.quantile(v / batch_size as f64);
            }
        }
    }
    let batch_ids = (0..num_batches as u32)
        .flat_map(|b| std::iter::repeat_n(b, batch_size))
        .collect();
    SampleMatrix::from_rows(d, values, Some(seed))?.with_batches(batch_ids)
}

pub fn resample_conditional(
    space: &InputSpace,
    samples: &SampleMatrix,
    j: usize,
    k: usize,
    seed: u64,
) -> Result<ResampleBlock> {
    resample_conditional_with(&IndependentSampler(space), space, samples, j, k, seed)
}

/// Resampling through an arbitrary conditional sampler. The stream for input
/// `j` is derived from `(seed, j)` so different inputs never share draws.
pub fn resample_conditional_with(
    sampler: &dyn ConditionalSampler,
    space: &InputSpace,
    samples: &SampleMatrix,
    j: usize,
    k: usize,
    seed: u64,
) -> Result<ResampleBlock> {
    space.check_index(j)?;
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if samples.dim() != space.dim() {
        return Err(Error::invalid(format!(
            "design has {} columns, space has {} inputs",
            samples.dim(),
            space.dim()
        )));
    }
    let mut rng = SeedStream::new(seed).rng("resample", j as u64);
    let mut values = Vec::with_capacity(samples.rows() * k);
    for row in samples.iter_rows() {
        for _ in 0..k {
            values.push(sampler.sample(j, row, &mut rng));
        }
    }
    ResampleBlock::new(j, k, values, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> InputSpace {
        InputSpace::new(vec![
            InputMarginal::uniform("Sm", 0.0, 400.0),
            InputMarginal::uniform("beta", 0.0, 2.0),
            InputMarginal::uniform("alfa", 0.0, 1.0),
            InputMarginal::uniform("Rs", 0.0, 0.1),
            InputMarginal::uniform("Rf", 0.1, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn iid_is_reproducible_and_in_support() {
        let space = InputSpace::unit_cube(2).unwrap();
        let a = sample_iid(&space, 3, 7).unwrap();
        let b = sample_iid(&space, 3, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.rows(), a.dim()), (3, 2));
        assert!(a.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(a, sample_iid(&space, 3, 8).unwrap());
    }

    #[test]
    fn iid_respects_shifted_lower_bound() {
        let space = table1();
        let s = sample_iid(&space, 5000, 1).unwrap();
        assert!(s.column(4).iter().all(|&v| (0.1..=1.0).contains(&v)));
        assert!(s.iter_rows().all(|r| space.contains(r)));
    }

    #[test]
    fn iid_rejects_empty() {
        let space = InputSpace::unit_cube(1).unwrap();
        assert!(matches!(sample_iid(&space, 0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn space_validation() {
        assert!(InputSpace::new(vec![]).is_err());
        assert!(InputSpace::new(vec![InputMarginal::uniform("a", 1.0, 1.0)]).is_err());
        assert!(InputSpace::new(vec![InputMarginal::uniform("a", 0.0, f64::INFINITY)]).is_err());
        assert!(InputSpace::new(vec![
            InputMarginal::uniform("a", 0.0, 1.0),
            InputMarginal::uniform("a", 0.0, 2.0)
        ])
        .is_err());
    }

    #[test]
    fn lhs_shape_matches_cbmz_layout() {
        let space = InputSpace::unit_cube(2).unwrap();
        let s = sample_lhs_batches(&space, 128, 625, 3).unwrap();
        assert_eq!(s.rows(), 80_000);
        let ids = s.batch_ids().unwrap();
        assert_eq!(batch_runs(ids).len(), 625);
    }

    #[test]
    fn lhs_one_point_per_stratum() {
        let space = InputSpace::unit_cube(1).unwrap();
        let s = sample_lhs_batches(&space, 4, 1, 11).unwrap();
        let mut strata: Vec<usize> = s.column(0).iter().map(|v| (v * 4.0) as usize).collect();
        strata.sort();
        assert_eq!(strata, vec![0, 1, 2, 3]);
    }

    #[test]
    fn lhs_stratification_all_dims_all_batches() {
        let space = table1();
        let m = 16;
        let s = sample_lhs_batches(&space, m, 10, 5).unwrap();
        for b in 0..10 {
            for (j, marg) in space.inputs().iter().enumerate() {
                let (lo, hi) = marg.distribution.support();
                let mut strata: Vec<usize> = (b * m..(b + 1) * m)
                    .map(|i| (((s.row(i)[j] - lo) / (hi - lo)) * m as f64) as usize)
                    .collect();
                strata.sort();
                assert_eq!(strata, (0..m).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn lhs_batches_differ() {
        let space = InputSpace::unit_cube(3).unwrap();
        let s = sample_lhs_batches(&space, 8, 2, 9).unwrap();
        let (a, b) = s.values().split_at(24);
        assert!(a.iter().zip(b).all(|(x, y)| x != y));
    }

    #[test]
    fn lhs_rejects_tiny_batches() {
        let space = InputSpace::unit_cube(1).unwrap();
        assert!(sample_lhs_batches(&space, 1, 3, 0).is_err());
    }

    #[test]
    fn resample_shape_support_and_range_check() {
        let space = InputSpace::unit_cube(2).unwrap();
        let s = sample_iid(&space, 3, 1).unwrap();
        let block = resample_conditional(&space, &s, 1, 1, 2).unwrap();
        assert_eq!((block.rows(), block.k), (3, 1));
        assert!(block.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(resample_conditional(&space, &s, 2, 1, 2).is_err());
        assert!(resample_conditional(&space, &s, 0, 0, 2).is_err());
    }

    #[test]
    fn resample_mean_matches_marginal() {
        let space = InputSpace::new(vec![
            InputMarginal::uniform("Sm", 0.0, 400.0),
            InputMarginal::uniform("z", 0.0, 1.0),
        ])
        .unwrap();
        let s = sample_iid(&space, 1_000_000, 4).unwrap();
        let block = resample_conditional(&space, &s, 0, 1, 5).unwrap();
        let n = block.rows() as f64;
        let mean = block.values().iter().sum::<f64>() / n;
        let se = (space.marginal(0).variance() / n).sqrt();
        assert!((mean - 200.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn resample_uncorrelated_with_design() {
        let space = InputSpace::unit_cube(3).unwrap();
        let n = 20_000;
        let s = sample_iid(&space, n, 6).unwrap();
        let block = resample_conditional(&space, &s, 0, 1, 6).unwrap();
        let r = block.values();
        for col in 0..3 {
            let c = s.column(col);
            let corr = correlation(r, &c);
            assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "col {col}: {corr}");
        }
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn batch_validation() {
        assert!(validate_batches(&[0, 0, 1, 1], 4).is_ok());
        assert!(validate_batches(&[0, 1, 0, 1], 4).is_err());
        assert!(validate_batches(&[0, 0, 0, 1], 4).is_err());
        assert!(validate_batches(&[0, 0], 3).is_err());
    }
}
