use serde::{Deserialize, Serialize};

use super::BoostModel;
use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::math::mean;
use crate::RiskModel;

/// Each predictor's share (in percent) of the split improvement summed over
/// the trees the model uses. An intercept-only model yields all zeros.
pub fn in_sample_importance(m: &BoostModel) -> Vec<f64> {
    let mut total = vec![0.0; m.n_predictors];
    for tree in m.used_trees() {
        for (acc, &r) in total.iter_mut().zip(tree.deviance_reduction()) {
            *acc += r;
        }
    }
    let sum: f64 = total.iter().sum();
    if sum <= 0.0 {
        log::warn!("model has no splits; in-sample importance is all zero");
        return vec![0.0; m.n_predictors];
    }
    total.iter().map(|&r| 100.0 * r / sum).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialDependence {
    /// Mean risk with the predictor forced to 0.
    pub off: f64,
    /// Mean risk with the predictor forced to 1.
    pub on: f64,
    pub delta: f64,
}

/// Average predicted risk over all rows of `ds` with predictor `j` forced to
/// 0 and then to 1, other predictors as observed.
pub fn partial_dependence<M: RiskModel>(m: &M, ds: &DataSet, j: usize) -> Result<PartialDependence> {
    if j >= ds.p() {
        return Err(Error::IndexOutOfRange { index: j, len: ds.p() });
    }
    let mut x = ds.x().clone();
    x.fill_column(j, false);
    let off = mean(&m.predict(&x)?);
    x.fill_column(j, true);
    let on = mean(&m.predict(&x)?);
    Ok(PartialDependence { off, on, delta: on - off })
}
