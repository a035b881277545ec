//! Rare-event risk analysis on indicator predictors.
//!
//! The pipeline runs three algorithms in sequence:
//!
//! 1. [`boosting`]: cost-weighted stochastic gradient boosting with Bernoulli
//!    deviance, the tree count chosen by stratified cross-validation.
//! 2. [`genetic`]: a genetic algorithm that uses the boosted model as its
//!    fitness function and evolves a population of high-risk binary profiles.
//! 3. [`clustering`]: average-linkage agglomerative clustering of the
//!    predictors of that population under the Gower (simple matching)
//!    dissimilarity.
//!
//! [`archetype`] reads importance off the evolved population (commonality and
//! reverse coding), [`logistic`] provides the conventional benchmark, and
//! [`pipeline`] plus [`report`] drive everything from one configuration file.

pub mod archetype;
pub mod boosting;
pub mod clustering;
pub mod dataset;
pub mod error;
pub mod genetic;
pub mod logistic;
pub mod math;
pub mod matrix;
pub mod pipeline;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::BinaryMatrix;

/// Anything that maps an indicator profile to a probability.
pub trait RiskModel: Sync {
    fn n_predictors(&self) -> usize;

    /// Predicted probability for one row; `row.len()` must equal `n_predictors()`.
    fn risk(&self, row: &[u8]) -> f64;

    fn predict(&self, x: &BinaryMatrix) -> Result<Vec<f64>> {
        if x.cols() != self.n_predictors() {
            return Err(Error::DimensionMismatch {
                expected: self.n_predictors(),
                found: x.cols(),
            });
        }
        Ok(x.iter_rows().map(|r| self.risk(r)).collect())
    }
}
