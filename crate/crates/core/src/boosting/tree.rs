use serde::{Deserialize, Serialize};

use crate::matrix::BinaryMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] == 0` go left, `== 1` go right.
    Split { feature: usize, left: usize, right: usize },
    Leaf { value: f64 },
}

/// Regression tree on indicator predictors; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    deviance_reduction: Vec<f64>,
}

impl RegressionTree {
    /// Builds a tree from explicit nodes. Every child index must point forward.
    pub fn from_nodes(nodes: Vec<Node>, n_predictors: usize) -> Self {
        assert!(!nodes.is_empty(), "a tree needs at least one node");
        for (i, node) in nodes.iter().enumerate() {
            if let Node::Split { feature, left, right } = *node {
                assert!(feature < n_predictors, "split feature out of range");
                assert!(left > i && right > i && left < nodes.len() && right < nodes.len());
            }
        }
        RegressionTree {
            nodes,
            deviance_reduction: vec![0.0; n_predictors],
        }
    }

    /// Single split on `feature` with the given leaf outputs.
    pub fn stump(feature: usize, when_off: f64, when_on: f64, n_predictors: usize) -> Self {
        Self::from_nodes(
            vec![
                Node::Split { feature, left: 1, right: 2 },
                Node::Leaf { value: when_off },
                Node::Leaf { value: when_on },
            ],
            n_predictors,
        )
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Split improvement credited to each predictor while growing this tree.
    pub fn deviance_reduction(&self) -> &[f64] {
        &self.deviance_reduction
    }

    pub fn n_predictors(&self) -> usize {
        self.deviance_reduction.len()
    }

    pub fn predict(&self, row: &[u8]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { value } => return value,
                Node::Split { feature, left, right } => {
                    k = if row[feature] == 0 { left } else { right };
                }
            }
        }
    }

    /// Longest root-to-leaf path, counted in splits.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], k: usize) -> usize {
            match nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn uses(&self, feature: usize) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n, Node::Split { feature: f, .. } if *f == feature))
    }
}

/// Per-row inputs for growing one tree.
pub(crate) struct GrowInput<'a> {
    pub x: &'a BinaryMatrix,
    /// Indices of the predictors equal to 1, per row.
    pub on: &'a [Vec<u32>],
    pub weight: &'a [f64],
    /// Working residual `y - p`.
    pub residual: &'a [f64],
    /// `weight * p * (1 - p)`.
    pub hessian: &'a [f64],
    pub max_depth: usize,
    pub min_node: usize,
}

/// Gains at or below this fraction of the node's weighted sum of squared
/// residuals are rounding noise, not splits.
pub(crate) const GAIN_TOLERANCE: f64 = 1e-12;

/// Best split of `rows` by weighted least squares on the working residuals.
///
/// Returns `(feature, improvement)` where improvement is the drop in weighted
/// residual sum of squares. Children must each hold at least `min_node` rows;
/// ties go to the lowest feature index.
pub(crate) fn best_split(input: &GrowInput<'_>, rows: &[usize]) -> Option<(usize, f64)> {
    let p = input.x.cols();
    let mut w_on = vec![0.0; p];
    let mut s_on = vec![0.0; p];
    let mut n_on = vec![0usize; p];
    let (mut w_all, mut s_all, mut ss_all) = (0.0, 0.0, 0.0);
    for &i in rows {
        let w = input.weight[i];
        let s = w * input.residual[i];
        w_all += w;
        s_all += s;
        ss_all += s * input.residual[i];
        for &j in &input.on[i] {
            let j = j as usize;
            w_on[j] += w;
            s_on[j] += s;
            n_on[j] += 1;
        }
    }
    let parent = s_all * s_all / w_all;
    let floor = GAIN_TOLERANCE * ss_all;
    let mut best: Option<(usize, f64)> = None;
    for j in 0..p {
        let n_off = rows.len() - n_on[j];
        if n_on[j] < input.min_node || n_off < input.min_node {
            continue;
        }
        let w_off = w_all - w_on[j];
        let s_off = s_all - s_on[j];
        let gain = s_on[j] * s_on[j] / w_on[j] + s_off * s_off / w_off - parent;
        if gain > floor && best.is_none_or(|(_, g)| gain > g) {
            best = Some((j, gain));
        }
    }
    best
}

/// Weighted Newton step for a leaf holding `rows`.
pub(crate) fn leaf_value(input: &GrowInput<'_>, rows: &[usize]) -> f64 {
    let (mut g, mut h) = (0.0, 0.0);
    for &i in rows {
        g += input.weight[i] * input.residual[i];
        h += input.hessian[i];
    }
    if h > 0.0 {
        g / h
    } else {
        0.0
    }
}

pub(crate) fn on_lists(x: &BinaryMatrix) -> Vec<Vec<u32>> {
    x.iter_rows()
        .map(|r| (0..r.len() as u32).filter(|&j| r[j as usize] == 1).collect())
        .collect()
}

pub(crate) fn grow(input: &GrowInput<'_>, rows: Vec<usize>) -> RegressionTree {
    let mut tree = RegressionTree {
        nodes: Vec::new(),
        deviance_reduction: vec![0.0; input.x.cols()],
    };
    grow_node(input, &mut tree, rows, 0);
    tree
}

fn grow_node(input: &GrowInput<'_>, tree: &mut RegressionTree, rows: Vec<usize>, depth: usize) -> usize {
    let at = tree.nodes.len();
    let split = if depth < input.max_depth && rows.len() >= 2 * input.min_node {
        best_split(input, &rows)
    } else {
        None
    };
    match split {
        None => {
            let value = leaf_value(input, &rows);
            tree.nodes.push(Node::Leaf { value });
        }
        Some((feature, gain)) => {
            tree.deviance_reduction[feature] += gain;
            tree.nodes.push(Node::Leaf { value: 0.0 });
            let (on, off): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| input.x.get(i, feature) == 1);
            let left = grow_node(input, tree, off, depth + 1);
            let right = grow_node(input, tree, on, depth + 1);
            tree.nodes[at] = Node::Split { feature, left, right };
        }
    }
    at
}
