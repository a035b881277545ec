use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{boost, check_trainable, observation_weights, weighted_intercept, BoostConfig};
use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::math::bernoulli_deviance;
use crate::rng;

const FOLD_TAG: u64 = 0xf01d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSelection {
    /// Selected number of trees (0 only when `max_trees == 0`).
    pub n_trees: usize,
    /// Pooled held-out weighted mean deviance after 1..=max_trees trees.
    pub curve: Vec<f64>,
    /// Held-out deviance of the intercept-only model.
    pub baseline: f64,
}

impl CvSelection {
    pub fn selected_deviance(&self) -> f64 {
        if self.n_trees == 0 {
            self.baseline
        } else {
            self.curve[self.n_trees - 1]
        }
    }
}

/// Fold label per row. Positives and negatives are shuffled separately and
/// dealt round-robin, so each fold gets its share of both classes.
pub fn stratified_folds(y: &[u8], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, FOLD_TAG);
    let mut fold = vec![0; y.len()];
    let mut offset = 0;
    for class in [1u8, 0] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for (r, &i) in idx.iter().enumerate() {
            fold[i] = (offset + r) % k;
        }
        offset += idx.len();
    }
    fold
}

/// Chooses the number of trees minimizing pooled held-out weighted deviance
/// over `cv_folds` stratified folds; ties go to fewer trees.
pub fn cv_select_trees(train: &DataSet, config: &BoostConfig) -> Result<CvSelection> {
    check_trainable(train, config)?;
    let k = config.cv_folds;
    let fold = stratified_folds(train.y(), k, config.seed);
    let parts: Vec<(Vec<usize>, Vec<usize>)> = (0..k)
        .map(|f| {
            let (held, fit): (Vec<usize>, Vec<usize>) = (0..train.n()).partition(|&i| fold[i] == f);
            (fit, held)
        })
        .collect();
    for (f, (fit, held)) in parts.iter().enumerate() {
        let has_both = |rows: &[usize]| {
            let pos = rows.iter().filter(|&&i| train.y()[i] == 1).count();
            pos > 0 && pos < rows.len()
        };
        if !has_both(fit) || !has_both(held) {
            return Err(Error::SingleClassFold { fold: f });
        }
    }

    let per_fold: Vec<(Vec<f64>, f64)> = parts
        .par_iter()
        .enumerate()
        .map(|(f, (fit, held))| fold_curve(train, config, f, fit, held))
        .collect::<Result<_>>()?;

    let total_weight: f64 = per_fold.iter().map(|(_, w)| w).sum();
    let pooled: Vec<f64> = (0..=config.max_trees)
        .map(|t| per_fold.iter().map(|(sums, _)| sums[t]).sum::<f64>() / total_weight)
        .collect();
    let baseline = pooled[0];
    let curve = pooled[1..].to_vec();
    let n_trees = curve
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (t, &d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((t + 1, d)),
        })
        .map_or(0, |(t, _)| t);
    Ok(CvSelection {
        n_trees,
        curve,
        baseline,
    })
}

/// Held-out weighted deviance sums after 0..=max_trees trees, plus the
/// held-out weight total.
fn fold_curve(
    train: &DataSet,
    config: &BoostConfig,
    f: usize,
    fit: &[usize],
    held: &[usize],
) -> Result<(Vec<f64>, f64)> {
    let fit_ds = train.select(fit);
    let held_ds = train.select(held);
    let fit_w = observation_weights(fit_ds.y(), config.cost_ratio);
    let held_w = observation_weights(held_ds.y(), config.cost_ratio);
    let mut f_held = vec![weighted_intercept(fit_ds.y(), &fit_w); held.len()];
    let dev_sum = |f_held: &[f64]| -> f64 {
        held_ds
            .y()
            .iter()
            .zip(f_held)
            .zip(&held_w)
            .map(|((&y, &fv), &w)| w * bernoulli_deviance(y, fv))
            .sum()
    };
    let mut sums = Vec::with_capacity(config.max_trees + 1);
    sums.push(dev_sum(&f_held));
    boost(&fit_ds, config, f as u64 + 1, |tree| {
        for (i, fv) in f_held.iter_mut().enumerate() {
            *fv += config.shrinkage * tree.predict(held_ds.x().row(i));
        }
        sums.push(dev_sum(&f_held));
    })?;
    Ok((sums, held_w.iter().sum()))
}
