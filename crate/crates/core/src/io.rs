//! Persistence: datasets, sample designs, forcing series, results and run
//! manifests.
//!
//! CSV files start with a `# format_version=N` comment; dataset files carry
//! a second `# provenance {json}` comment. Numbers are written in the
//! shortest form that parses back to the same `f64`, so save, load and save
//! again is byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{EvaluatedDataset, Provenance};
use crate::error::{Error, Result};
use crate::estimators::IntervalResult;
use crate::models::ForcingSeries;
use crate::space::SampleMatrix;

pub const FORMAT_VERSION: u32 = 1;

/// Shortest round-trip rendering of a double.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// A numeric CSV table with its leading comments.
struct Table {
    comments: Vec<String>,
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn parse(text: &str) -> Result<Table> {
        let mut comments = Vec::new();
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            match line.strip_prefix('#') {
                Some(c) => {
                    comments.push(c.trim().to_string());
                    body_start += line.len();
                }
                None => break,
            }
        }
        if let Some(v) = comments.iter().find_map(|c| c.strip_prefix("format_version=")) {
            let v: u32 = v
                .trim()
                .parse()
                .map_err(|_| Error::format(format!("bad format_version `{v}`")))?;
            if v != FORMAT_VERSION {
                return Err(Error::format(format!(
                    "unsupported format_version {v} (expected {FORMAT_VERSION})"
                )));
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(&text.as_bytes()[body_start..]);
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::format(format!("unreadable header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(Error::format("missing header row"));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::format(format!("row {row}: {e}")))?;
            if rec.len() != header.len() {
                return Err(Error::format(format!(
                    "row {row}: expected {} fields, found {}",
                    header.len(),
                    rec.len()
                )));
            }
            let vals = rec
                .iter()
                .zip(&header)
                .map(|(cell, col)| {
                    let v: f64 = cell.parse().map_err(|_| {
                        Error::format(format!("row {row}, column `{col}`: `{cell}` is not a number"))
                    })?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::format(format!(
                            "row {row}, column `{col}`: non-finite value `{cell}`"
                        )))
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(vals);
        }
        Ok(Table {
            comments,
            header,
            rows,
        })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn values(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[c]).collect()
    }
}

/// Leading `x_1..x_d` columns of a design table plus its optional batch
/// column.
fn design_from_table(t: &Table) -> Result<SampleMatrix> {
    let d = t
        .header
        .iter()
        .enumerate()
        .take_while(|(j, h)| **h == format!("x_{}", j + 1))
        .count();
    if d == 0 {
        return Err(Error::format("header must start with x_1"));
    }
    let known = ["y", "batch", "f"];
    if let Some(h) = t.header[d..].iter().find(|h| !known.contains(&h.as_str())) {
        return Err(Error::format(format!(
            "unexpected column `{h}`; expected x_1..x_{d} then any of y, batch, f"
        )));
    }
    if t.rows.is_empty() {
        return Err(Error::format("no data rows"));
    }
    let values: Vec<f64> = t.rows.iter().flat_map(|r| r[..d].iter().copied()).collect();
    let m = SampleMatrix::from_rows(d, values, None)?;
    match t.column("batch") {
        None => Ok(m),
        Some(c) => {
            let ids = t
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let b = r[c];
                    if b >= 0.0 && b.fract() == 0.0 && b <= u32::MAX as f64 {
                        Ok(b as u32)
                    } else {
                        Err(Error::format(format!(
                            "row {}: batch label {b} is not a non-negative integer",
                            i + 1
                        )))
                    }
                })
                .collect::<Result<Vec<u32>>>()?;
            m.with_batches(ids)
        }
    }
}

fn design_header(d: usize, batched: bool) -> Vec<String> {
    let mut h: Vec<String> = (1..=d).map(|j| format!("x_{j}")).collect();
    if batched {
        h.push("batch".into());
    }
    h
}

fn push_row(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let mut first = true;
    for c in cells {
        if !first {
            out.push(',');
        }
        out.push_str(&c);
        first = false;
    }
    out.push('\n');
}

fn design_cells(m: &SampleMatrix, i: usize) -> impl Iterator<Item = String> + '_ {
    m.row(i)
        .iter()
        .map(|&v| fmt_f64(v))
        .chain(m.batch_ids().map(|b| b[i].to_string()))
}

pub fn sample_matrix_to_csv(m: &SampleMatrix) -> String {
    let mut out = format!("# format_version={FORMAT_VERSION}\n");
    if let Some(seed) = m.seed {
        out.push_str(&format!("# seed={seed}\n"));
    }
    push_row(&mut out, design_header(m.dim(), m.batch_ids().is_some()));
    for i in 0..m.rows() {
        push_row(&mut out, design_cells(m, i));
    }
    out
}

pub fn save_sample_matrix(m: &SampleMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &sample_matrix_to_csv(m))
}

/// Reads the design columns of any sample or dataset CSV; output columns are
/// ignored.
pub fn load_sample_matrix(path: impl AsRef<Path>) -> Result<SampleMatrix> {
    let path = path.as_ref();
    if is_json(path) {
        return Ok(load_dataset(path)?.inputs);
    }
    let t = Table::parse(&read_text(path)?).map_err(|e| in_file(path, e))?;
    let mut m = design_from_table(&t).map_err(|e| in_file(path, e))?;
    m.seed = t
        .comments
        .iter()
        .find_map(|c| c.strip_prefix("seed=")?.trim().parse().ok());
    Ok(m)
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}

pub fn dataset_to_csv(data: &EvaluatedDataset) -> Result<String> {
    let prov = serde_json::to_string(&data.provenance)
        .map_err(|e| Error::format(format!("provenance: {e}")))?;
    let mut out = format!("# format_version={FORMAT_VERSION}\n# provenance {prov}\n");
    let mut header = design_header(data.dim(), false);
    header.push("y".into());
    if data.batch_ids().is_some() {
        header.push("batch".into());
    }
    if data.surrogate_outputs.is_some() {
        header.push("f".into());
    }
    push_row(&mut out, header);
    for i in 0..data.rows() {
        let cells = data
            .inputs
            .row(i)
            .iter()
            .map(|&v| fmt_f64(v))
            .chain(std::iter::once(fmt_f64(data.outputs[i])))
            .chain(data.batch_ids().map(|b| b[i].to_string()))
            .chain(data.surrogate_outputs.as_ref().map(|f| fmt_f64(f[i])));
        push_row(&mut out, cells);
    }
    Ok(out)
}

pub fn dataset_from_csv(text: &str) -> Result<EvaluatedDataset> {
    let t = Table::parse(text)?;
    let inputs = design_from_table(&t)?;
    let y = t
        .column("y")
        .ok_or_else(|| Error::format("dataset needs a `y` column"))?;
    let mut data = EvaluatedDataset::new(inputs, t.values(y))?;
    if let Some(f) = t.column("f") {
        data = data.with_surrogate_outputs(t.values(f))?;
    }
    if let Some(p) = t.comments.iter().find_map(|c| c.strip_prefix("provenance ")) {
        data.provenance = serde_json::from_str(p)
            .map_err(|e| Error::format(format!("provenance comment: {e}")))?;
        data.inputs.seed = data.provenance.seeds.first().copied();
    }
    Ok(data)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetJson {
    format_version: u32,
    d: usize,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    surrogate_outputs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    batch_ids: Option<Vec<u32>>,
    #[serde(default)]
    provenance: Provenance,
}

pub fn dataset_to_json(data: &EvaluatedDataset) -> Result<String> {
    let c = DatasetJson {
        format_version: FORMAT_VERSION,
        d: data.dim(),
        inputs: data.inputs.iter_rows().map(<[f64]>::to_vec).collect(),
        outputs: data.outputs.clone(),
        surrogate_outputs: data.surrogate_outputs.clone(),
        batch_ids: data.batch_ids().map(<[u32]>::to_vec),
        provenance: data.provenance.clone(),
    };
    serde_json::to_string_pretty(&c).map_err(|e| Error::format(e.to_string()))
}

pub fn dataset_from_json(text: &str) -> Result<EvaluatedDataset> {
    let c: DatasetJson =
        serde_json::from_str(text).map_err(|e| Error::format(format!("dataset JSON: {e}")))?;
    if c.format_version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "unsupported format_version {}",
            c.format_version
        )));
    }
    if let Some(i) = c.inputs.iter().position(|r| r.len() != c.d) {
        return Err(Error::format(format!(
            "row {}: expected {} inputs, found {}",
            i + 1,
            c.d,
            c.inputs[i].len()
        )));
    }
    let mut m = SampleMatrix::from_rows(c.d, c.inputs.concat(), c.provenance.seeds.first().copied())?;
    if let Some(b) = c.batch_ids {
        m = m.with_batches(b)?;
    }
    let mut data = EvaluatedDataset::new(m, c.outputs)?;
    if let Some(f) = c.surrogate_outputs {
        data = data.with_surrogate_outputs(f)?;
    }
    data.provenance = c.provenance;
    Ok(data)
}

/// CSV unless the extension is `.json`.
pub fn save_dataset(data: &EvaluatedDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = if is_json(path) {
        dataset_to_json(data)?
    } else {
        dataset_to_csv(data)?
    };
    write_text(path, &text)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<EvaluatedDataset> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let r = if is_json(path) {
        dataset_from_json(&text)
    } else {
        dataset_from_csv(&text)
    };
    r.map_err(|e| in_file(path, e))
}

/// A prediction table `x_1..x_d,f`, e.g. an external surrogate evaluated at
/// exported query points.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<(SampleMatrix, Vec<f64>)> {
    let path = path.as_ref();
    let t = Table::parse(&read_text(path)?).map_err(|e| in_file(path, e))?;
    let m = design_from_table(&t).map_err(|e| in_file(path, e))?;
    let f = t
        .column("f")
        .ok_or_else(|| Error::format(format!("{}: prediction table needs an `f` column", path.display())))?;
    Ok((m, t.values(f)))
}

/// `day,precip_mm,pet_mm[,obs_flow_mm]`.
pub fn load_forcing(path: impl AsRef<Path>) -> Result<ForcingSeries> {
    let path = path.as_ref();
    forcing_from_csv(&read_text(path)?).map_err(|e| in_file(path, e))
}

pub fn forcing_from_csv(text: &str) -> Result<ForcingSeries> {
    let t = Table::parse(text)?;
    let expect = ["day", "precip_mm", "pet_mm"];
    let obs = match t.header.len() {
        3 => false,
        4 if t.header[3] == "obs_flow_mm" => true,
        _ => {
            return Err(Error::format(format!(
                "forcing header must be day,precip_mm,pet_mm[,obs_flow_mm], got {}",
                t.header.join(",")
            )))
        }
    };
    if t.header[..3] != expect {
        return Err(Error::format(format!(
            "forcing header must be day,precip_mm,pet_mm[,obs_flow_mm], got {}",
            t.header.join(",")
        )));
    }
    if t.rows.is_empty() {
        return Err(Error::format("forcing file has no rows"));
    }
    for (i, r) in t.rows.iter().enumerate() {
        if let Some(c) = (1..r.len()).find(|&c| r[c] < 0.0) {
            return Err(Error::format(format!(
                "row {}: {} is negative ({})",
                i + 1,
                t.header[c],
                r[c]
            )));
        }
    }
    ForcingSeries::new(t.values(1), t.values(2), obs.then(|| t.values(3)))
}

pub fn forcing_to_csv(f: &ForcingSeries) -> String {
    let mut out = format!("# format_version={FORMAT_VERSION}\n");
    let mut header = vec!["day".to_string(), "precip_mm".into(), "pet_mm".into()];
    if f.observed_flow.is_some() {
        header.push("obs_flow_mm".into());
    }
    push_row(&mut out, header);
    for t in 0..f.len() {
        let mut cells = vec![(t + 1).to_string(), fmt_f64(f.precipitation[t]), fmt_f64(f.pet[t])];
        if let Some(o) = &f.observed_flow {
            cells.push(fmt_f64(o[t]));
        }
        push_row(&mut out, cells);
    }
    out
}

pub fn save_forcing(f: &ForcingSeries, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &forcing_to_csv(f))
}

/// One row per interval: plot-ready, no covariance.
pub fn intervals_to_csv(results: &[IntervalResult], names: &[&str]) -> String {
    let mut out = format!("# format_version={FORMAT_VERSION}\n");
    push_row(
        &mut out,
        [
            "input", "name", "method", "lower", "upper", "point_lower", "point_upper", "n",
            "degenerate",
        ]
        .map(String::from),
    );
    for r in results {
        let name = names.get(r.input_index).copied().unwrap_or("");
        push_row(
            &mut out,
            [
                (r.input_index + 1).to_string(),
                name.to_string(),
                r.method.to_string(),
                fmt_f64(r.lower),
                fmt_f64(r.upper),
                fmt_f64(r.point_lower),
                fmt_f64(r.point_upper),
                r.diagnostics.n.to_string(),
                r.diagnostics.degenerate.to_string(),
            ],
        );
    }
    out
}

pub fn write_csv_text(text: &str, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), text)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(e.to_string()))?;
    write_text(path.as_ref(), &(text + "\n"))
}

/// Reads a JSON document into `T`; unknown keys are rejected by the target
/// types.
pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

/// Hex SHA-256 of the compact JSON rendering of a config.
pub fn config_hash<T: Serialize + ?Sized>(config: &T) -> String {
    let text = serde_json::to_string(config).unwrap_or_default();
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Everything needed to rerun a CLI invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    /// Evaluations by model or surrogate name.
    pub evaluations: BTreeMap<String, u64>,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    /// Human-readable ledger and quality lines.
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, argv: Vec<String>, config: serde_json::Value) -> Self {
        let started_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunManifest {
            format_version: FORMAT_VERSION,
            tool: "floodgate".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv,
            config_hash: config_hash(&config),
            config,
            seeds: BTreeMap::new(),
            evaluations: BTreeMap::new(),
            started_unix,
            wall_clock_seconds: 0.0,
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        write_json(self, dir.as_ref().join("manifest.json"))
    }
}
