//! Cost-weighted stochastic gradient boosting with Bernoulli deviance.
//!
//! Positive cases carry observation weight `cost_ratio`, negatives weight 1;
//! the weights enter the intercept, the working-residual tree fit and the
//! Newton leaf steps. Each iteration grows a depth-limited regression tree on
//! a random `bag_fraction` subsample (without replacement) and adds it to the
//! log-odds with shrinkage.

mod confusion;
mod cv;
mod importance;
mod tree;

pub use confusion::{confusion, ConfusionRates, ConfusionTable};
pub use cv::{cv_select_trees, stratified_folds, CvSelection};
pub use importance::{in_sample_importance, partial_dependence, PartialDependence};
pub use tree::{Node, RegressionTree};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::math::{bernoulli_deviance, sigmoid};
use crate::matrix::BinaryMatrix;
use crate::{rng, RiskModel};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostConfig {
    #[serde(default = "defaults::cost_ratio")]
    pub cost_ratio: f64,
    #[serde(default = "defaults::interaction_depth")]
    pub interaction_depth: usize,
    #[serde(default = "defaults::shrinkage")]
    pub shrinkage: f64,
    #[serde(default = "defaults::bag_fraction")]
    pub bag_fraction: f64,
    #[serde(default = "defaults::min_node")]
    pub min_node: usize,
    #[serde(default = "defaults::max_trees")]
    pub max_trees: usize,
    #[serde(default = "defaults::cv_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn cost_ratio() -> f64 {
        10.0
    }
    pub fn interaction_depth() -> usize {
        10
    }
    pub fn shrinkage() -> f64 {
        0.1
    }
    pub fn bag_fraction() -> f64 {
        0.5
    }
    pub fn min_node() -> usize {
        10
    }
    pub fn max_trees() -> usize {
        3000
    }
    pub fn cv_folds() -> usize {
        5
    }
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            cost_ratio: defaults::cost_ratio(),
            interaction_depth: defaults::interaction_depth(),
            shrinkage: defaults::shrinkage(),
            bag_fraction: defaults::bag_fraction(),
            min_node: defaults::min_node(),
            max_trees: defaults::max_trees(),
            cv_folds: defaults::cv_folds(),
            seed: 0,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("boost: {m}")));
        if !(self.cost_ratio > 0.0 && self.cost_ratio.is_finite()) {
            return bad("cost_ratio must be positive");
        }
        if self.interaction_depth == 0 {
            return bad("interaction_depth must be at least 1");
        }
        if !(self.shrinkage > 0.0 && self.shrinkage.is_finite()) {
            return bad("shrinkage must be positive");
        }
        if !(self.bag_fraction > 0.0 && self.bag_fraction <= 1.0) {
            return bad("bag_fraction must lie in (0, 1]");
        }
        if self.min_node == 0 {
            return bad("min_node must be at least 1");
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub format_version: u32,
    pub n_predictors: usize,
    pub intercept: f64,
    pub shrinkage: f64,
    pub trees: Vec<RegressionTree>,
    pub n_trees_used: usize,
    pub config: BoostConfig,
    /// Pooled held-out deviance after 1..=|trees| iterations, when CV ran.
    pub cv_curve: Vec<f64>,
    /// Weighted mean training deviance after 0..=|trees| iterations.
    pub train_deviance: Vec<f64>,
    /// Per tree: drop in weighted mean deviance on the subsample it was fit to.
    pub bag_improvement: Vec<f64>,
}

impl BoostModel {
    /// Assembles a model from hand-built trees; all trees are used.
    pub fn from_parts(intercept: f64, shrinkage: f64, trees: Vec<RegressionTree>, n_predictors: usize) -> Self {
        assert!(trees.iter().all(|t| t.n_predictors() == n_predictors));
        BoostModel {
            format_version: MODEL_FORMAT_VERSION,
            n_predictors,
            intercept,
            shrinkage,
            n_trees_used: trees.len(),
            trees,
            config: BoostConfig {
                shrinkage,
                ..BoostConfig::default()
            },
            cv_curve: Vec::new(),
            train_deviance: Vec::new(),
            bag_improvement: Vec::new(),
        }
    }

    pub fn used_trees(&self) -> &[RegressionTree] {
        &self.trees[..self.n_trees_used]
    }

    /// Discards fitted trees beyond the selected count. Predictions and
    /// diagnostics curves are unchanged.
    pub fn truncate_to_used(&mut self) {
        self.trees.truncate(self.n_trees_used);
    }

    /// Log-odds for one row.
    pub fn log_odds(&self, row: &[u8]) -> f64 {
        self.intercept + self.shrinkage * self.used_trees().iter().map(|t| t.predict(row)).sum::<f64>()
    }

    /// Compact JSON; floats round-trip bit-exactly through [`from_json`](Self::from_json).
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: BoostModel = serde_json::from_str(s)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        if m.n_trees_used > m.trees.len() {
            return Err(Error::Serialization("n_trees_used exceeds tree count".into()));
        }
        Ok(m)
    }
}

impl RiskModel for BoostModel {
    fn n_predictors(&self) -> usize {
        self.n_predictors
    }

    fn risk(&self, row: &[u8]) -> f64 {
        sigmoid(self.log_odds(row))
    }
}

pub fn predict_risk(m: &BoostModel, x: &BinaryMatrix) -> Result<Vec<f64>> {
    m.predict(x)
}

pub(crate) fn observation_weights(y: &[u8], cost_ratio: f64) -> Vec<f64> {
    y.iter().map(|&v| if v == 1 { cost_ratio } else { 1.0 }).collect()
}

/// Weighted log-odds of the positive class.
pub(crate) fn weighted_intercept(y: &[u8], weight: &[f64]) -> f64 {
    let (mut pos, mut neg) = (0.0, 0.0);
    for (&v, &w) in y.iter().zip(weight) {
        if v == 1 {
            pos += w;
        } else {
            neg += w;
        }
    }
    (pos / neg).ln()
}

pub(crate) fn weighted_mean_deviance(y: &[u8], f: &[f64], weight: &[f64]) -> f64 {
    let (mut d, mut w) = (0.0, 0.0);
    for ((&yi, &fi), &wi) in y.iter().zip(f).zip(weight) {
        d += wi * bernoulli_deviance(yi, fi);
        w += wi;
    }
    d / w
}

fn check_trainable(train: &DataSet, config: &BoostConfig) -> Result<()> {
    config.validate()?;
    let pos = train.positives();
    if pos == 0 || pos == train.n() {
        return Err(Error::ConstantResponse);
    }
    if config.min_node > train.n() {
        return Err(Error::invalid(format!(
            "min_node {} exceeds the {} training rows",
            config.min_node,
            train.n()
        )));
    }
    Ok(())
}

/// Runs the boosting iterations, calling `on_tree` after each tree is added.
pub(crate) fn boost<F>(train: &DataSet, config: &BoostConfig, stream_tag: u64, mut on_tree: F) -> Result<BoostModel>
where
    F: FnMut(&RegressionTree),
{
    check_trainable(train, config)?;
    let n = train.n();
    let x = train.x();
    let y = train.y();
    let weight = observation_weights(y, config.cost_ratio);
    let intercept = weighted_intercept(y, &weight);
    let on = tree::on_lists(x);
    let mut f = vec![intercept; n];
    let mut residual = vec![0.0; n];
    let mut hessian = vec![0.0; n];
    let mut train_deviance = Vec::with_capacity(config.max_trees + 1);
    train_deviance.push(weighted_mean_deviance(y, &f, &weight));

    let bag_n = ((config.bag_fraction * n as f64).floor() as usize).max(1);
    let mut rng = rng::stream(config.seed, stream_tag);
    let mut trees = Vec::with_capacity(config.max_trees);
    let mut bag_improvement = Vec::with_capacity(config.max_trees);
    let bag_deviance = |bag: &[usize], f: &[f64]| -> f64 {
        let (mut d, mut w) = (0.0, 0.0);
        for &i in bag {
            d += weight[i] * bernoulli_deviance(y[i], f[i]);
            w += weight[i];
        }
        d / w
    };

    for _ in 0..config.max_trees {
        let mut bag = if bag_n == n {
            (0..n).collect()
        } else {
            index::sample(&mut rng, n, bag_n).into_vec()
        };
        bag.sort_unstable();
        for &i in &bag {
            let p = sigmoid(f[i]);
            residual[i] = y[i] as f64 - p;
            hessian[i] = weight[i] * p * (1.0 - p);
        }
        let input = tree::GrowInput {
            x,
            on: &on,
            weight: &weight,
            residual: &residual,
            hessian: &hessian,
            max_depth: config.interaction_depth,
            min_node: config.min_node,
        };
        let before = bag_deviance(&bag, &f);
        let tree = tree::grow(&input, bag.clone());
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += config.shrinkage * tree.predict(x.row(i));
        }
        bag_improvement.push(before - bag_deviance(&bag, &f));
        train_deviance.push(weighted_mean_deviance(y, &f, &weight));
        on_tree(&tree);
        trees.push(tree);
    }

    Ok(BoostModel {
        format_version: MODEL_FORMAT_VERSION,
        n_predictors: train.p(),
        intercept,
        shrinkage: config.shrinkage,
        n_trees_used: trees.len(),
        trees,
        config: config.clone(),
        cv_curve: Vec::new(),
        train_deviance,
        bag_improvement,
    })
}

/// Fits `config.max_trees` trees and uses all of them.
pub fn fit_boost(train: &DataSet, config: &BoostConfig) -> Result<BoostModel> {
    boost(train, config, 0, |_| {})
}

/// Picks the tree count by stratified cross-validation, then fits on all of
/// `train`. The returned model keeps every fitted tree but predicts with the
/// selected count.
pub fn fit_boost_cv(train: &DataSet, config: &BoostConfig) -> Result<BoostModel> {
    let cv = cv_select_trees(train, config)?;
    let mut model = fit_boost(train, config)?;
    model.n_trees_used = cv.n_trees;
    model.cv_curve = cv.curve;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{base_rate, synthesize, SynthSpec};
    use crate::math::logit;

    fn small_config() -> BoostConfig {
        BoostConfig {
            interaction_depth: 3,
            max_trees: 30,
            min_node: 5,
            seed: 3,
            ..BoostConfig::default()
        }
    }

    fn planted(seed: u64) -> DataSet {
        let mut spec = SynthSpec::planted(1500, 6, 3, 1.2, 0.3, seed);
        spec.base_rate = 0.1;
        synthesize(&spec).unwrap()
    }

    #[test]
    fn zero_trees_predict_weighted_base_rate() {
        let ds = planted(1);
        let cfg = BoostConfig { max_trees: 0, ..small_config() };
        let m = fit_boost(&ds, &cfg).unwrap();
        let pos = ds.positives() as f64 * cfg.cost_ratio;
        let expect = pos / (pos + (ds.n() - ds.positives()) as f64);
        for p in predict_risk(&m, ds.x()).unwrap() {
            assert!((p - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_cost_intercept_is_logit_base_rate() {
        let ds = planted(2);
        let cfg = BoostConfig { cost_ratio: 1.0, max_trees: 0, ..small_config() };
        let m = fit_boost(&ds, &cfg).unwrap();
        assert!((m.intercept - logit(base_rate(&ds))).abs() < 1e-12);
    }

    #[test]
    fn config_is_echoed() {
        let ds = planted(3);
        let cfg = BoostConfig { interaction_depth: 10, cv_folds: 5, max_trees: 2, ..small_config() };
        let m = fit_boost(&ds, &cfg).unwrap();
        assert_eq!(m.config.interaction_depth, 10);
        assert_eq!(m.config.cv_folds, 5);
        assert!(m.trees.iter().all(|t| t.depth() <= 10));
    }

    #[test]
    fn rejects_bad_inputs() {
        let ds = planted(4);
        let one_class = ds.select(&(0..ds.n()).filter(|&i| ds.y()[i] == 0).collect::<Vec<_>>());
        assert!(matches!(fit_boost(&one_class, &small_config()), Err(Error::ConstantResponse)));
        let cfg = BoostConfig { min_node: ds.n() + 1, ..small_config() };
        assert!(fit_boost(&ds, &cfg).is_err());
        let cfg = BoostConfig { bag_fraction: 1.5, ..small_config() };
        assert!(matches!(fit_boost(&ds, &cfg), Err(Error::Config(_))));
        let cfg = BoostConfig { cv_folds: 1, ..small_config() };
        assert!(fit_boost(&ds, &cfg).is_err());
    }

    #[test]
    fn same_seed_same_model() {
        let ds = planted(5);
        let a = fit_boost(&ds, &small_config()).unwrap();
        let b = fit_boost(&ds, &small_config()).unwrap();
        assert_eq!(a, b);
        let c = fit_boost(&ds, &BoostConfig { seed: 4, ..small_config() }).unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn stub_tree_probabilities() {
        let t = RegressionTree::stump(0, logit(0.3) / 0.1, logit(0.7) / 0.1, 2);
        let m = BoostModel::from_parts(0.0, 0.1, vec![t], 2);
        let x = BinaryMatrix::from_rows(&[[1, 0], [0, 1], [1, 1]]).unwrap();
        let p = predict_risk(&m, &x).unwrap();
        assert!((p[0] - 0.7).abs() < 1e-12);
        assert!((p[1] - 0.3).abs() < 1e-12);
        assert_eq!(p[0], p[2]);
        assert!(predict_risk(&m, &BinaryMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let ds = planted(6);
        let m = fit_boost(&ds, &small_config()).unwrap();
        let back = BoostModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let a = predict_risk(&m, ds.x()).unwrap();
        let b = predict_risk(&back, ds.x()).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn rejects_future_format() {
        let m = BoostModel::from_parts(0.0, 0.1, vec![], 1);
        let s = m.to_json().unwrap().replace("\"format_version\":1", "\"format_version\":9");
        assert!(BoostModel::from_json(&s).is_err());
    }
}
