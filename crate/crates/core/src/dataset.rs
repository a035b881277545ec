//! Binary-predictor / binary-response datasets.
//!
//! A [`DataSet`] is an `n x p` matrix of indicator predictors plus an
//! indicator response. Data arrive from CSV (one header row, cells `0`/`1`)
//! or from [`synthesize`], a planted-signal generator with an additive
//! log-odds model whose intercept is solved so the positive rate hits a
//! requested base rate.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::matrix::BinaryMatrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorSchema {
    names: Vec<String>,
    response_name: String,
}

impl PredictorSchema {
    pub fn new(names: Vec<String>, response_name: impl Into<String>) -> Result<Self> {
        let response_name = response_name.into();
        if names.is_empty() {
            return Err(Error::InvalidSchema("no predictors".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate predictor {n:?}")));
            }
        }
        if seen.contains(response_name.as_str()) {
            return Err(Error::InvalidSchema(format!(
                "response {response_name:?} is also a predictor"
            )));
        }
        Ok(PredictorSchema {
            names,
            response_name,
        })
    }

    /// Predictors named `x1..xp` with response `y`.
    pub fn numbered(p: usize) -> Result<Self> {
        Self::new((1..=p).map(|j| format!("x{j}")).collect(), "y")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSet {
    schema: PredictorSchema,
    x: BinaryMatrix,
    y: Vec<u8>,
}

impl DataSet {
    pub fn new(schema: PredictorSchema, x: BinaryMatrix, y: Vec<u8>) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::EmptyFile);
        }
        if x.cols() != schema.len() {
            return Err(Error::DimensionMismatch {
                expected: schema.len(),
                found: x.cols(),
            });
        }
        if y.len() != x.rows() {
            return Err(Error::invalid(format!(
                "{} responses for {} rows",
                y.len(),
                x.rows()
            )));
        }
        if let Some(i) = y.iter().position(|&v| v > 1) {
            return Err(Error::NonBinaryValue {
                row: i + 1,
                column: schema.response_name.clone(),
                value: y[i].to_string(),
            });
        }
        Ok(DataSet { schema, x, y })
    }

    pub fn schema(&self) -> &PredictorSchema {
        &self.schema
    }

    pub fn x(&self) -> &BinaryMatrix {
        &self.x
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn positives(&self) -> usize {
        self.y.iter().map(|&v| v as usize).sum()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        DataSet {
            schema: self.schema.clone(),
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = self.schema.names.iter().map(String::as_str).collect();
        header.push(&self.schema.response_name);
        out.write_record(&header)?;
        let mut rec: Vec<&str> = Vec::with_capacity(self.p() + 1);
        for (row, &y) in self.x.iter_rows().zip(&self.y) {
            rec.clear();
            rec.extend(row.iter().map(|&v| cell(v)));
            rec.push(cell(y));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

fn cell(v: u8) -> &'static str {
    if v == 0 {
        "0"
    } else {
        "1"
    }
}

pub(crate) fn parse_cell(s: &str, row: usize, column: &str) -> Result<u8> {
    match s.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::NonBinaryValue {
            row,
            column: column.to_string(),
            value: other.to_string(),
        }),
    }
}

/// Loads a dataset from a CSV file.
///
/// Without a schema the last header column is the response. With a schema the
/// header must contain exactly the schema's predictors and response (in any
/// order), and columns are reordered to the schema's order.
pub fn load_csv(path: &Path, schema: Option<&PredictorSchema>) -> Result<DataSet> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(f), schema)
}

/// Like [`load_csv`] with the response column chosen by name.
pub fn load_csv_with_response(path: &Path, response: &str) -> Result<DataSet> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_with_response(std::io::BufReader::new(f), response)
}

pub fn read_csv<R: Read>(r: R, schema: Option<&PredictorSchema>) -> Result<DataSet> {
    let (header, rows) = read_raw(r)?;
    let schema = match schema {
        Some(s) => s.clone(),
        None => {
            let (resp, preds) = header.split_last().ok_or(Error::EmptyFile)?;
            PredictorSchema::new(preds.to_vec(), resp.clone())?
        }
    };
    assemble(&header, rows, schema)
}

pub fn read_csv_with_response<R: Read>(r: R, response: &str) -> Result<DataSet> {
    let (header, rows) = read_raw(r)?;
    if !header.iter().any(|h| h == response) {
        return Err(Error::HeaderMismatch(format!(
            "response column {response:?} not in header"
        )));
    }
    let preds = header.iter().filter(|h| *h != response).cloned().collect();
    let schema = PredictorSchema::new(preds, response)?;
    assemble(&header, rows, schema)
}

fn read_raw<R: Read>(r: R) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyFile);
    }
    let rows = rdr.records().collect::<Result<Vec<_>, _>>()?;
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok((header, rows))
}

fn assemble(header: &[String], rows: Vec<csv::StringRecord>, schema: PredictorSchema) -> Result<DataSet> {
    if header.len() != schema.len() + 1 {
        return Err(Error::HeaderMismatch(format!(
            "header has {} columns, schema expects {}",
            header.len(),
            schema.len() + 1
        )));
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::HeaderMismatch(format!("column {name:?} missing from header")))
    };
    let src: Vec<usize> = schema.names.iter().map(|n| find(n)).collect::<Result<_>>()?;
    let resp = find(&schema.response_name)?;

    let p = schema.len();
    let mut cells = Vec::with_capacity(rows.len() * p);
    let mut y = Vec::with_capacity(rows.len());
    for (i, rec) in rows.iter().enumerate() {
        let row = i + 1;
        if rec.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                expected: header.len(),
                found: rec.len(),
            });
        }
        for &c in &src {
            cells.push(parse_cell(&rec[c], row, &header[c])?);
        }
        y.push(parse_cell(&rec[resp], row, &header[resp])?);
    }
    let x = BinaryMatrix::from_vec(rows.len(), p, cells)?;
    DataSet::new(schema, x, y)
}

/// Uniform random partition into `n_train` training rows and the rest.
///
/// Row order inside each part follows the original order.
pub fn split_train_test(ds: &DataSet, n_train: usize, seed: u64) -> Result<(DataSet, DataSet)> {
    let n = ds.n();
    if n_train == 0 || n_train >= n {
        return Err(Error::SplitOutOfRange { n_train, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let (train, test) = idx.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.select(train), ds.select(test)))
}

pub fn base_rate(ds: &DataSet) -> f64 {
    ds.positives() as f64 / ds.n() as f64
}

/// Parameters of the planted-signal generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub p: usize,
    #[serde(default = "default_base_rate")]
    pub base_rate: f64,
    pub effects: Vec<f64>,
    pub predictor_on_rates: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_base_rate() -> f64 {
    0.05
}

impl SynthSpec {
    /// `p` predictors with on-rate `on_rate`; the first `n_signal` carry log-odds
    /// effect `effect`, the rest none.
    pub fn planted(n: usize, p: usize, n_signal: usize, effect: f64, on_rate: f64, seed: u64) -> Self {
        SynthSpec {
            n,
            p,
            base_rate: default_base_rate(),
            effects: (0..p).map(|j| if j < n_signal { effect } else { 0.0 }).collect(),
            predictor_on_rates: vec![on_rate; p],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::invalid("synth spec needs n >= 1 and p >= 1"));
        }
        if self.effects.len() != self.p || self.predictor_on_rates.len() != self.p {
            return Err(Error::invalid(format!(
                "synth spec has p = {} but {} effects and {} on-rates",
                self.p,
                self.effects.len(),
                self.predictor_on_rates.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.base_rate) {
            return Err(Error::invalid(format!("base_rate {} outside [0,1]", self.base_rate)));
        }
        if let Some(r) = self.predictor_on_rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::invalid(format!("on-rate {r} outside [0,1]")));
        }
        if let Some(e) = self.effects.iter().find(|e| !e.is_finite()) {
            return Err(Error::invalid(format!("effect {e} is not finite")));
        }
        Ok(())
    }
}

/// Draws a dataset from `spec`.
///
/// Predictors are independent Bernoulli draws; the intercept is solved by
/// bisection so the mean of `sigmoid(intercept + effects . x)` over the drawn
/// rows equals `base_rate`, then responses are Bernoulli draws.
pub fn synthesize(spec: &SynthSpec) -> Result<DataSet> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let mut x = BinaryMatrix::zeros(spec.n, spec.p);
    for i in 0..spec.n {
        let row = x.row_mut(i);
        for (cell, &rate) in row.iter_mut().zip(&spec.predictor_on_rates) {
            *cell = (rng.gen::<f64>() < rate) as u8;
        }
    }
    let eta: Vec<f64> = x
        .iter_rows()
        .map(|r| r.iter().zip(&spec.effects).map(|(&v, &e)| v as f64 * e).sum())
        .collect();

    let y = if spec.base_rate == 0.0 {
        vec![0; spec.n]
    } else if spec.base_rate == 1.0 {
        vec![1; spec.n]
    } else {
        let alpha = solve_intercept(&eta, spec.base_rate)?;
        eta.iter()
            .map(|&e| (rng.gen::<f64>() < sigmoid(alpha + e)) as u8)
            .collect()
    };
    DataSet::new(PredictorSchema::numbered(spec.p)?, x, y)
}

/// Beyond this the logistic saturates in double precision.
const BRACKET_LIMIT: f64 = 710.0;

pub(crate) fn solve_intercept(eta: &[f64], target: f64) -> Result<f64> {
    let rate = |a: f64| eta.iter().map(|&e| sigmoid(a + e)).sum::<f64>() / eta.len() as f64;
    let (mut lo, mut hi) = (-1.0, 1.0);
    while rate(lo) > target {
        lo *= 2.0;
        if lo < -BRACKET_LIMIT {
            return Err(Error::InterceptBracket { base_rate: target });
        }
    }
    while rate(hi) < target {
        hi *= 2.0;
        if hi > BRACKET_LIMIT {
            return Err(Error::InterceptBracket { base_rate: target });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
