//! Reading an evolved population: which predictors it has settled on, how
//! much the model's risk depends on them, and how close the synthetic
//! members come to real cases.

use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::genetic::Population;
use crate::matrix::{pack_bits, BinaryMatrix};
use crate::RiskModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchClass {
    AlwaysOn,
    AlwaysOff,
    InBetween,
}

impl SwitchClass {
    pub fn of(proportion_on: f64, epsilon: f64) -> Self {
        if proportion_on >= 1.0 - epsilon {
            SwitchClass::AlwaysOn
        } else if proportion_on <= epsilon {
            SwitchClass::AlwaysOff
        } else {
            SwitchClass::InBetween
        }
    }

    pub fn is_universal(self) -> bool {
        self != SwitchClass::InBetween
    }

    pub fn label(self) -> &'static str {
        match self {
            SwitchClass::AlwaysOn => "Always On",
            SwitchClass::AlwaysOff => "Always Off",
            SwitchClass::InBetween => "In Between",
        }
    }
}

impl std::fmt::Display for SwitchClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonalityReport {
    pub epsilon: f64,
    pub proportion_on: Vec<f64>,
    pub switch_class: Vec<SwitchClass>,
}

impl CommonalityReport {
    pub fn len(&self) -> usize {
        self.proportion_on.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proportion_on.is_empty()
    }

    /// Predictors classified Always On or Always Off, in column order.
    pub fn universal(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.switch_class[j].is_universal()).collect()
    }
}

/// Share of members with each gene on, classified with tolerance `epsilon`.
pub fn commonality_importance(pop: &Population, epsilon: f64) -> Result<CommonalityReport> {
    commonality_of_matrix(&pop.to_matrix(), epsilon)
}

pub fn commonality_of_matrix(genes: &BinaryMatrix, epsilon: f64) -> Result<CommonalityReport> {
    if genes.rows() == 0 {
        return Err(Error::invalid("population is empty"));
    }
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::Config(format!("commonality epsilon {epsilon} outside [0, 0.5)")));
    }
    let n = genes.rows() as f64;
    let proportion_on: Vec<f64> = (0..genes.cols()).map(|j| genes.column_sum(j) as f64 / n).collect();
    let switch_class = proportion_on.iter().map(|&q| SwitchClass::of(q, epsilon)).collect();
    Ok(CommonalityReport {
        epsilon,
        proportion_on,
        switch_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecodedPredictor {
    pub predictor: usize,
    pub recoded_mean: f64,
    /// `benchmark_mean - recoded_mean`.
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverseCodingReport {
    pub benchmark_mean: f64,
    pub entries: Vec<RecodedPredictor>,
}

impl ReverseCodingReport {
    pub fn get(&self, predictor: usize) -> Option<&RecodedPredictor> {
        self.entries.iter().find(|e| e.predictor == predictor)
    }
}

/// Complements one population column at a time and puts it back.
pub struct ReverseCoder {
    genes: BinaryMatrix,
}

impl ReverseCoder {
    pub fn new(pop: &Population) -> Self {
        ReverseCoder { genes: pop.to_matrix() }
    }

    pub fn from_matrix(genes: BinaryMatrix) -> Self {
        ReverseCoder { genes }
    }

    /// Current state of the population matrix.
    pub fn population(&self) -> &BinaryMatrix {
        &self.genes
    }

    pub fn mean_risk<M: RiskModel>(&self, m: &M) -> Result<f64> {
        let risk = m.predict(&self.genes)?;
        Ok(risk.iter().sum::<f64>() / risk.len() as f64)
    }

    /// Mean risk with column `j` complemented; the matrix is restored before
    /// returning.
    pub fn recoded_mean<M: RiskModel>(&mut self, m: &M, j: usize) -> Result<f64> {
        if j >= self.genes.cols() {
            return Err(Error::IndexOutOfRange { index: j, len: self.genes.cols() });
        }
        self.genes.flip_column(j);
        let out = self.mean_risk(m);
        self.genes.flip_column(j);
        out
    }
}

/// Reverse-codes every universal predictor of `report`.
pub fn reverse_coding_importance<M: RiskModel>(
    m: &M,
    pop: &Population,
    report: &CommonalityReport,
) -> Result<ReverseCodingReport> {
    let universal = report.universal();
    if universal.is_empty() {
        log::warn!("no Always On or Always Off predictors; reverse coding skipped");
    }
    reverse_coding_subset(m, pop, &universal)
}

/// Reverse-codes the given predictors, whatever their commonality.
pub fn reverse_coding_subset<M: RiskModel>(
    m: &M,
    pop: &Population,
    predictors: &[usize],
) -> Result<ReverseCodingReport> {
    if m.n_predictors() != pop.n_genes() {
        return Err(Error::DimensionMismatch {
            expected: m.n_predictors(),
            found: pop.n_genes(),
        });
    }
    let mut coder = ReverseCoder::new(pop);
    let benchmark_mean = coder.mean_risk(m)?;
    let mut entries = Vec::with_capacity(predictors.len());
    for &j in predictors {
        let recoded_mean = coder.recoded_mean(m, j)?;
        entries.push(RecodedPredictor {
            predictor: j,
            recoded_mean,
            drop: benchmark_mean - recoded_mean,
        });
    }
    Ok(ReverseCodingReport { benchmark_mean, entries })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NearestMatch {
    /// Per member, the most predictor values it shares with any real row.
    pub best: Vec<usize>,
    pub max: usize,
}

pub fn nearest_match(pop: &Population, ds: &DataSet) -> Result<NearestMatch> {
    nearest_match_matrix(&pop.to_matrix(), ds.x())
}

pub fn nearest_match_matrix(members: &BinaryMatrix, real: &BinaryMatrix) -> Result<NearestMatch> {
    if members.rows() == 0 || real.rows() == 0 {
        return Err(Error::invalid("nearest match needs non-empty populations"));
    }
    if members.cols() != real.cols() {
        return Err(Error::DimensionMismatch {
            expected: real.cols(),
            found: members.cols(),
        });
    }
    let p = real.cols();
    let real_packed = real.packed_rows();
    let best: Vec<usize> = members
        .iter_rows()
        .map(|row| {
            let a = pack_bits(row);
            let fewest = real_packed
                .iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones() as usize).sum::<usize>())
                .min()
                .expect("non-empty");
            p - fewest
        })
        .collect();
    let max = best.iter().copied().max().unwrap_or(0);
    Ok(NearestMatch { best, max })
}

/// Commonality of every predictor across several independently evolved
/// populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonalityStability {
    pub seeds: Vec<u64>,
    /// `runs[s][j]`: commonality of predictor `j` in run `s`.
    pub runs: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// Runs in which each predictor was classified the same as in the first.
    pub class_agreement: Vec<usize>,
}

pub fn commonality_stability(seeds: Vec<u64>, reports: &[CommonalityReport]) -> Result<CommonalityStability> {
    if reports.is_empty() || reports.len() != seeds.len() {
        return Err(Error::invalid("one commonality report per seed is required"));
    }
    let p = reports[0].len();
    if let Some(r) = reports.iter().find(|r| r.len() != p) {
        return Err(Error::DimensionMismatch { expected: p, found: r.len() });
    }
    let runs: Vec<Vec<f64>> = reports.iter().map(|r| r.proportion_on.clone()).collect();
    let column = |j: usize| runs.iter().map(move |r| r[j]);
    Ok(CommonalityStability {
        mean: (0..p).map(|j| column(j).sum::<f64>() / runs.len() as f64).collect(),
        min: (0..p).map(|j| column(j).fold(f64::INFINITY, f64::min)).collect(),
        max: (0..p).map(|j| column(j).fold(f64::NEG_INFINITY, f64::max)).collect(),
        class_agreement: (0..p)
            .map(|j| reports.iter().filter(|r| r.switch_class[j] == reports[0].switch_class[j]).count())
            .collect(),
        seeds,
        runs,
    })
}
