//! Agglomerative clustering of predictors by how often an evolved population
//! sets them differently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genetic::Population;
use crate::matrix::{pack_bits, BinaryMatrix};

/// Distances closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Symmetric object-by-object dissimilarities with labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissimilarityMatrix {
    labels: Vec<String>,
    values: Vec<f64>,
}

impl DissimilarityMatrix {
    /// `values` is row-major `n x n`. Requires at least two objects, a zero
    /// diagonal, symmetry and entries in `[0, 1]`.
    pub fn new(labels: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if n < 2 {
            return Err(Error::invalid("clustering needs at least two objects"));
        }
        if values.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: values.len() });
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::invalid(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let v = values[i * n + j];
                if v != values[j * n + i] {
                    return Err(Error::invalid(format!("asymmetric at ({i}, {j})")));
                }
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invalid(format!("dissimilarity {v} at ({i}, {j}) outside [0, 1]")));
                }
            }
        }
        Ok(DissimilarityMatrix { labels, values })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: labels.len() });
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }
}

/// Simple-matching dissimilarity between predictor columns of `pop`.
pub fn gower_binary_dissimilarity(pop: &Population) -> Result<DissimilarityMatrix> {
    gower_of_matrix(&pop.to_matrix())
}

/// `d(j, k)` = share of rows in which columns `j` and `k` differ. Labels
/// default to `x1..xp`.
pub fn gower_of_matrix(genes: &BinaryMatrix) -> Result<DissimilarityMatrix> {
    let p = genes.cols();
    if p < 2 {
        return Err(Error::invalid("clustering needs at least two predictors"));
    }
    if genes.rows() == 0 {
        return Err(Error::invalid("population is empty"));
    }
    let n = genes.rows() as f64;
    let columns: Vec<Vec<u64>> = (0..p)
        .map(|j| pack_bits(&genes.iter_rows().map(|r| r[j]).collect::<Vec<u8>>()))
        .collect();
    let mut values = vec![0.0; p * p];
    for j in 0..p {
        for k in 0..j {
            let differ: u32 = columns[j].iter().zip(&columns[k]).map(|(a, b)| (a ^ b).count_ones()).sum();
            let d = differ as f64 / n;
            values[j * p + k] = d;
            values[k * p + j] = d;
        }
    }
    let labels = (1..=p).map(|j| format!("x{j}")).collect();
    DissimilarityMatrix::new(labels, values)
}

/// One agglomeration. Objects have ids `0..p`; the cluster formed at step
/// `s` gets id `p + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
    /// Height at which each object first joins a cluster.
    pub first_merge_height: Vec<f64>,
    /// Leaves left to right.
    pub order: Vec<usize>,
    pub agglomerative_coefficient: f64,
}

impl Dendrogram {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }

    pub fn final_height(&self) -> f64 {
        self.merges.last().map_or(0.0, |m| m.height)
    }

    /// Merge heights divided by the final height; all zeros if that is 0.
    pub fn normalized_heights(&self) -> Vec<f64> {
        let top = self.final_height();
        self.merges
            .iter()
            .map(|m| if top > 0.0 { m.height / top } else { 0.0 })
            .collect()
    }

    /// Objects contained in cluster `id`, ascending.
    pub fn members(&self, id: usize) -> Vec<usize> {
        let p = self.len();
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(c) = stack.pop() {
            if c < p {
                out.push(c);
            } else {
                let m = &self.merges[c - p];
                stack.push(m.left);
                stack.push(m.right);
            }
        }
        out.sort_unstable();
        out
    }

    pub fn to_newick(&self) -> String {
        let p = self.len();
        let height = |id: usize| if id < p { 0.0 } else { self.merges[id - p].height };
        fn walk(dg: &Dendrogram, id: usize, parent: f64, height: &dyn Fn(usize) -> f64, out: &mut String) {
            let p = dg.len();
            if id < p {
                out.push_str(&newick_label(&dg.labels[id]));
            } else {
                let m = dg.merges[id - p];
                out.push('(');
                walk(dg, m.left, m.height, height, out);
                out.push(',');
                walk(dg, m.right, m.height, height, out);
                out.push(')');
            }
            out.push_str(&format!(":{}", parent - height(id)));
        }
        let root = 2 * p - 2;
        let m = self.merges[root - p];
        let mut out = String::from("(");
        walk(self, m.left, m.height, &height, &mut out);
        out.push(',');
        walk(self, m.right, m.height, &height, &mut out);
        out.push_str(");");
        out
    }

    /// Merge list as plain text, one step per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("step\tleft\tright\theight\tnormalized\tsize\n");
        for (s, (m, h)) in self.merges.iter().zip(self.normalized_heights()).enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                s + 1,
                self.node_name(m.left),
                self.node_name(m.right),
                m.height,
                h,
                m.size
            ));
        }
        out.push_str(&format!("agglomerative coefficient\t{}\n", self.agglomerative_coefficient));
        out
    }

    fn node_name(&self, id: usize) -> String {
        if id < self.len() {
            self.labels[id].clone()
        } else {
            format!("#{}", id - self.len() + 1)
        }
    }
}

fn newick_label(s: &str) -> String {
    if s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-') && !s.is_empty() {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', "''"))
    }
}

/// Unweighted average-linkage (UPGMA) agglomeration.
///
/// Each step merges the closest pair of clusters; pairs within
/// [`TIE_TOLERANCE`] of the minimum are resolved in favour of the smallest
/// `(min member of first, min member of second)`.
pub fn agnes_average_linkage(d: &DissimilarityMatrix) -> Dendrogram {
    let p = d.len();
    // slot i holds the cluster whose smallest member is i
    let mut dist: Vec<f64> = d.values.clone();
    let mut active: Vec<bool> = vec![true; p];
    let mut size: Vec<usize> = vec![1; p];
    let mut id: Vec<usize> = (0..p).collect();
    let mut first = vec![f64::NAN; p];
    let mut merges = Vec::with_capacity(p - 1);

    for step in 0..p - 1 {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..p {
            if !active[i] {
                continue;
            }
            for j in i + 1..p {
                if !active[j] {
                    continue;
                }
                let v = dist[i * p + j];
                if best.is_none_or(|(_, _, b)| v < b - TIE_TOLERANCE) {
                    best = Some((i, j, v));
                }
            }
        }
        let (a, b, raw) = best.expect("at least two active clusters");
        // average linkage cannot invert; this only absorbs rounding
        let height = merges.last().map_or(raw, |m: &Merge| raw.max(m.height));
        for slot in [a, b] {
            if id[slot] < p {
                first[id[slot]] = height;
            }
        }
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in 0..p {
            if active[k] && k != a && k != b {
                let v = (na * dist[a * p + k] + nb * dist[b * p + k]) / (na + nb);
                dist[a * p + k] = v;
                dist[k * p + a] = v;
            }
        }
        merges.push(Merge {
            left: id[a],
            right: id[b],
            height,
            size: size[a] + size[b],
        });
        active[b] = false;
        size[a] += size[b];
        id[a] = p + step;
    }

    let mut dg = Dendrogram {
        labels: d.labels.clone(),
        merges,
        first_merge_height: first,
        order: Vec::with_capacity(p),
        agglomerative_coefficient: 0.0,
    };
    let mut stack = vec![2 * p - 2];
    while let Some(c) = stack.pop() {
        if c < p {
            dg.order.push(c);
        } else {
            let m = dg.merges[c - p];
            stack.push(m.right);
            stack.push(m.left);
        }
    }
    dg.agglomerative_coefficient = agglomerative_coefficient(&dg);
    dg
}

/// Mean over objects of `1 - m(i) / M`, with `m(i)` the object's first-merge
/// height and `M` the final height. Defined as 1 when `M` is 0.
pub fn agglomerative_coefficient(dg: &Dendrogram) -> f64 {
    let top = dg.final_height();
    if top <= 0.0 {
        log::warn!("all merge heights are zero; agglomerative coefficient set to 1");
        return 1.0;
    }
    let n = dg.first_merge_height.len() as f64;
    dg.first_merge_height.iter().map(|&m| 1.0 - m / top).sum::<f64>() / n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cut {
    K(usize),
    Height(f64),
}

/// Clusters left after stopping the agglomeration at `cut`, each sorted,
/// ordered by smallest member.
pub fn cut_clusters(dg: &Dendrogram, cut: Cut) -> Result<Vec<Vec<usize>>> {
    let p = dg.len();
    let n_merges = match cut {
        Cut::K(k) if (1..=p).contains(&k) => p - k,
        Cut::K(k) => return Err(Error::invalid(format!("cluster count {k} outside 1..={p}"))),
        Cut::Height(h) if h >= 0.0 => dg.merges.iter().take_while(|m| m.height <= h).count(),
        Cut::Height(h) => return Err(Error::invalid(format!("cut height {h} is negative"))),
    };
    let mut roots: Vec<usize> = (0..p).collect();
    for (s, m) in dg.merges.iter().take(n_merges).enumerate() {
        roots.retain(|&r| r != m.left && r != m.right);
        roots.push(p + s);
    }
    let mut clusters: Vec<Vec<usize>> = roots.into_iter().map(|r| dg.members(r)).collect();
    clusters.sort();
    Ok(clusters)
}
