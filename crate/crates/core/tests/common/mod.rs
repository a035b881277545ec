#![allow(dead_code)]

use rand::Rng as _;
use rarerisk::genetic::{Chromosome, Population};
use rarerisk::rng;
use rarerisk::{BinaryMatrix, RiskModel};

pub fn random_matrix(rows: usize, cols: usize, on_rate: f64, seed: u64) -> BinaryMatrix {
    let mut r = rng::seeded(seed);
    let data = (0..rows * cols).map(|_| u8::from(r.gen_bool(on_rate))).collect();
    BinaryMatrix::from_vec(rows, cols, data).unwrap()
}

/// A population with zero fitness, for tests that only look at genes.
pub fn population_of(m: &BinaryMatrix) -> Population {
    let members = m.iter_rows().map(|r| Chromosome::new(r.to_vec()).unwrap()).collect();
    Population::new(members, vec![0.0; m.rows()]).unwrap()
}

/// Risk `base + sum_j delta_j x_j`.
pub struct Additive {
    pub base: f64,
    pub delta: Vec<f64>,
}

impl RiskModel for Additive {
    fn n_predictors(&self) -> usize {
        self.delta.len()
    }

    fn risk(&self, row: &[u8]) -> f64 {
        self.base + row.iter().zip(&self.delta).filter(|(&v, _)| v == 1).map(|(_, &d)| d).sum::<f64>()
    }
}

/// Textbook Gower dissimilarity of two binary columns.
pub fn gower_brute(m: &BinaryMatrix, j: usize, k: usize) -> f64 {
    let disagree = (0..m.rows()).filter(|&i| m.get(i, j) != m.get(i, k)).count();
    disagree as f64 / m.rows() as f64
}

/// One merge of the naive oracle: the two member sets and their distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveMerge {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub height: f64,
}

/// Average linkage recomputed from the original distances at every step.
/// Clusters are ordered by their smallest member and ties within `tol` go to
/// the first pair in that order.
pub fn naive_average_linkage(d: &[Vec<f64>], tol: f64) -> Vec<NaiveMerge> {
    let mut clusters: Vec<Vec<usize>> = (0..d.len()).map(|i| vec![i]).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut s = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        s += d[i][j];
                    }
                }
                let avg = s / (clusters[a].len() * clusters[b].len()) as f64;
                if best.is_none_or(|(_, _, v)| avg < v - tol) {
                    best = Some((a, b, avg));
                }
            }
        }
        let (a, b, height) = best.unwrap();
        let right = clusters.remove(b);
        let left = clusters.remove(a);
        let mut joined = [left.clone(), right.clone()].concat();
        joined.sort_unstable();
        merges.push(NaiveMerge { left, right, height });
        clusters.push(joined);
        clusters.sort_by_key(|c| c[0]);
    }
    merges
}
