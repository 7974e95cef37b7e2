//! CART classification trees (Gini impurity), shared node layout.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{TrainData, TreeParams};
use crate::dataset::N_FEATURES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, x: &[f64; N_FEATURES]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { value } => return value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            walk(&self.nodes, 0)
        }
    }

    pub fn is_stump_leaf(&self) -> bool {
        matches!(self.nodes.first(), Some(Node::Leaf { .. }))
    }
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Threshold strictly between two distinct sorted values that sends `lo` left
/// and `hi` right.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

/// Which features a split may look at.
pub(crate) enum FeatureDraw<'a, R> {
    All(&'a [usize]),
    Subsample { allowed: &'a [usize], k: usize, rng: R },
}

impl<R: Rng> FeatureDraw<'_, R> {
    fn candidates(&mut self) -> Vec<usize> {
        match self {
            FeatureDraw::All(a) => a.to_vec(),
            FeatureDraw::Subsample { allowed, k, rng } => {
                let mut f: Vec<usize> = sample(rng, allowed.len(), (*k).min(allowed.len()))
                    .into_iter()
                    .map(|i| allowed[i])
                    .collect();
                f.sort_unstable();
                f
            }
        }
    }
}

struct Builder<'a, R> {
    data: &'a TrainData,
    params: &'a TreeParams,
    draw: FeatureDraw<'a, R>,
    nodes: Vec<Node>,
}

/// Σ c² / n for a class-count vector: the quantity a Gini split maximizes
/// (summed over children).
fn purity(counts: &[u32], n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: u64 = counts.iter().map(|&c| c as u64 * c as u64).sum();
    sq as f64 / n as f64
}

impl<R: Rng> Builder<'_, R> {
    fn leaf(&mut self, counts: &[u32], n: u32) -> usize {
        let value = counts.iter().map(|&c| c as f64 / n as f64).collect();
        self.nodes.push(Node::Leaf { value });
        self.nodes.len() - 1
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let k = self.data.n_classes;
        let mut counts = vec![0u32; k];
        for &i in &idx {
            counts[self.data.y[i]] += 1;
        }
        let n = idx.len() as u32;
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let min_leaf = self.params.min_samples_leaf.max(1);
        if pure || depth >= self.params.max_depth || idx.len() < 2 * min_leaf {
            return self.leaf(&counts, n);
        }
        let Some((feature, threshold)) = self.best_split(&idx, &counts, n, min_leaf) else {
            return self.leaf(&counts, n);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.data.x[i][feature] <= threshold);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { value: vec![] });
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }

    /// Exhaustive scan; strict improvement only, so ties keep the lowest
    /// feature and then the lowest threshold.
    fn best_split(&mut self, idx: &[usize], counts: &[u32], n: u32, min_leaf: usize) -> Option<(usize, f64)> {
        let k = self.data.n_classes;
        let mut best_score = purity(counts, n);
        let mut best = None;
        let mut sorted = idx.to_vec();
        for f in self.draw.candidates() {
            let x = &self.data.x;
            sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
            let mut left = vec![0u32; k];
            let mut right = counts.to_vec();
            for pos in 1..sorted.len() {
                let prev = sorted[pos - 1];
                let c = self.data.y[prev];
                left[c] += 1;
                right[c] -= 1;
                let (lo, hi) = (x[prev][f], x[sorted[pos]][f]);
                if lo == hi || pos < min_leaf || sorted.len() - pos < min_leaf {
                    continue;
                }
                let nl = pos as u32;
                let score = purity(&left, nl) + purity(&right, n - nl);
                if score > best_score {
                    best_score = score;
                    best = Some((f, midpoint(lo, hi)));
                }
            }
        }
        best
    }
}

pub(crate) fn build_cart<R: Rng>(data: &TrainData, rows: Vec<usize>, params: &TreeParams, draw: FeatureDraw<'_, R>) -> Tree {
    let mut b = Builder {
        data,
        params,
        draw,
        nodes: Vec::new(),
    };
    b.build(rows, 0);
    Tree { nodes: b.nodes }
}
