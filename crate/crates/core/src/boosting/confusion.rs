use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::error::Result;
use crate::RiskModel;

/// Test-set classification table with the error rates read off its rows
/// (classification error) and columns (forecasting error).
///
/// Rates whose denominator is zero are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTable {
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

impl ConfusionTable {
    pub fn from_counts(tn: u64, fp: u64, fn_: u64, tp: u64) -> Self {
        ConfusionTable { tn, fp, fn_, tp }
    }

    /// Share of actual negatives forecast positive.
    pub fn classification_error_neg(&self) -> f64 {
        ratio(self.fp, self.tn + self.fp)
    }

    /// Share of actual positives forecast negative.
    pub fn classification_error_pos(&self) -> f64 {
        ratio(self.fn_, self.fn_ + self.tp)
    }

    /// Share of negative forecasts that were wrong.
    pub fn forecast_error_neg(&self) -> f64 {
        ratio(self.fn_, self.tn + self.fn_)
    }

    /// Share of positive forecasts that were wrong.
    pub fn forecast_error_pos(&self) -> f64 {
        ratio(self.fp, self.fp + self.tp)
    }

    /// False positives per false negative actually incurred.
    pub fn achieved_cost_ratio(&self) -> f64 {
        ratio(self.fp, self.fn_)
    }

    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn rates(&self) -> ConfusionRates {
        ConfusionRates {
            classification_error_neg: self.classification_error_neg(),
            classification_error_pos: self.classification_error_pos(),
            forecast_error_neg: self.forecast_error_neg(),
            forecast_error_pos: self.forecast_error_pos(),
            achieved_cost_ratio: self.achieved_cost_ratio(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRates {
    pub classification_error_neg: f64,
    pub classification_error_pos: f64,
    pub forecast_error_neg: f64,
    pub forecast_error_pos: f64,
    pub achieved_cost_ratio: f64,
}

/// Classifies positive iff predicted risk is strictly above `threshold`.
pub fn confusion<M: RiskModel>(m: &M, ds: &DataSet, threshold: f64) -> Result<ConfusionTable> {
    let risk = m.predict(ds.x())?;
    let mut t = ConfusionTable::default();
    for (&r, &y) in risk.iter().zip(ds.y()) {
        match (y == 1, r > threshold) {
            (false, false) => t.tn += 1,
            (false, true) => t.fp += 1,
            (true, false) => t.fn_ += 1,
            (true, true) => t.tp += 1,
        }
    }
    Ok(t)
}

impl Default for ConfusionTable {
    fn default() -> Self {
        ConfusionTable::from_counts(0, 0, 0, 0)
    }
}
