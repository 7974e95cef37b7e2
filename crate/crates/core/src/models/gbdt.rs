//! Multiclass gradient boosting on histogram-quantized features.
//!
//! Each boosting round fits one regression tree per class to the softmax
//! gradient; leaves take the Newton step `-G / (H + lambda)` scaled by the
//! learning rate.

use super::tree::{Node, Tree};
use super::{GbdtParams, TrainData, TreeParams};
use crate::dataset::N_FEATURES;
use crate::exec;

const MIN_CHILD_HESSIAN: f64 = 1e-3;
const MIN_SPLIT_GAIN: f64 = 1e-12;

/// Upper edges of each feature's bins. Value `v` falls in the first bin `b`
/// with `v <= edges[b]`, or the last bin when above every edge.
#[derive(Debug, Clone)]
pub(crate) struct Binner {
    edges: Vec<Vec<f64>>,
}

impl Binner {
    pub(crate) fn fit(data: &TrainData, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, 256);
        let edges = (0..N_FEATURES)
            .map(|f| {
                let mut v: Vec<f64> = data.x.iter().map(|r| r[f]).collect();
                v.sort_by(f64::total_cmp);
                let mut uniq = v.clone();
                uniq.dedup();
                if uniq.len() <= max_bins {
                    uniq.windows(2).map(|w| super::tree::midpoint(w[0], w[1])).collect()
                } else {
                    let mut cuts: Vec<f64> = (1..max_bins)
                        .map(|q| v[(q * v.len() / max_bins).min(v.len() - 1)])
                        .collect();
                    cuts.dedup();
                    // the top value must land in the last bin
                    cuts.retain(|c| *c < *uniq.last().expect("non-empty"));
                    cuts
                }
            })
            .collect();
        Binner { edges }
    }

    fn bin(&self, f: usize, v: f64) -> u8 {
        self.edges[f].partition_point(|e| *e < v) as u8
    }

    fn n_bins(&self, f: usize) -> usize {
        self.edges[f].len() + 1
    }

    pub(crate) fn transform(&self, x: &[[f64; N_FEATURES]]) -> Vec<[u8; N_FEATURES]> {
        x.iter()
            .map(|r| std::array::from_fn(|f| self.bin(f, r[f])))
            .collect()
    }
}

struct RegTreeBuilder<'a> {
    bins: &'a [[u8; N_FEATURES]],
    binner: &'a Binner,
    grad: &'a [f64],
    hess: &'a [f64],
    features: &'a [usize],
    params: &'a TreeParams,
    lambda: f64,
    scale: f64,
    nodes: Vec<Node>,
}

impl RegTreeBuilder<'_> {
    fn leaf(&mut self, g: f64, h: f64) -> usize {
        self.nodes.push(Node::Leaf {
            value: vec![-g / (h + self.lambda) * self.scale],
        });
        self.nodes.len() - 1
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let g: f64 = idx.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = idx.iter().map(|&i| self.hess[i]).sum();
        let min_leaf = self.params.min_samples_leaf.max(1);
        if depth >= self.params.max_depth || idx.len() < 2 * min_leaf {
            return self.leaf(g, h);
        }
        let Some((feature, bin)) = self.best_split(&idx, g, h, min_leaf) else {
            return self.leaf(g, h);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.bins[i][feature] <= bin);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { value: vec![] });
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[me] = Node::Split {
            feature,
            threshold: self.binner.edges[feature][bin as usize],
            left,
            right,
        };
        me
    }

    fn best_split(&self, idx: &[usize], g: f64, h: f64, min_leaf: usize) -> Option<(usize, u8)> {
        let parent = g * g / (h + self.lambda);
        let mut best_gain = MIN_SPLIT_GAIN;
        let mut best = None;
        for &f in self.features {
            let nb = self.binner.n_bins(f);
            if nb < 2 {
                continue;
            }
            let mut hg = vec![0.0; nb];
            let mut hh = vec![0.0; nb];
            let mut hc = vec![0usize; nb];
            for &i in idx {
                let b = self.bins[i][f] as usize;
                hg[b] += self.grad[i];
                hh[b] += self.hess[i];
                hc[b] += 1;
            }
            let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
            for b in 0..nb - 1 {
                gl += hg[b];
                hl += hh[b];
                cl += hc[b];
                if hc[b] == 0 || cl < min_leaf {
                    continue;
                }
                let cr = idx.len() - cl;
                if cr < min_leaf {
                    break;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < MIN_CHILD_HESSIAN || hr < MIN_CHILD_HESSIAN {
                    continue;
                }
                let gain = gl * gl / (hl + self.lambda) + gr * gr / (hr + self.lambda) - parent;
                if gain > best_gain {
                    best_gain = gain;
                    best = Some((f, b as u8));
                }
            }
        }
        best
    }
}

pub(crate) struct Boosted {
    pub trees: Vec<Tree>,
    pub tree_class: Vec<usize>,
    pub init_scores: Vec<f64>,
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    for x in v.iter_mut() {
        *x /= s;
    }
}

pub(crate) fn softmax(raw: &[f64]) -> Vec<f64> {
    let mut v = raw.to_vec();
    softmax_in_place(&mut v);
    v
}

pub(crate) fn fit(data: &TrainData, params: &GbdtParams, features: &[usize]) -> Boosted {
    let k = data.n_classes;
    let n = data.x.len();
    let binner = Binner::fit(data, params.histogram_bins);
    let bins = binner.transform(&data.x);
    let mut prior = vec![0.0; k];
    for &y in &data.y {
        prior[y] += 1.0;
    }
    let init_scores: Vec<f64> = prior.iter().map(|c: &f64| (c.max(1.0) / n as f64).ln()).collect();
    let mut raw: Vec<Vec<f64>> = vec![init_scores.clone(); n];
    let mut trees = Vec::with_capacity(params.n_trees * k);
    let mut tree_class = Vec::with_capacity(params.n_trees * k);
    let rows: Vec<usize> = (0..n).collect();
    for _ in 0..params.n_trees {
        let probs: Vec<Vec<f64>> = raw.iter().map(|r| softmax(r)).collect();
        let round = exec::map_range(k, |c| {
            let grad: Vec<f64> = (0..n)
                .map(|i| probs[i][c] - if data.y[i] == c { 1.0 } else { 0.0 })
                .collect();
            let hess: Vec<f64> = (0..n).map(|i| (probs[i][c] * (1.0 - probs[i][c])).max(1e-16)).collect();
            let mut b = RegTreeBuilder {
                bins: &bins,
                binner: &binner,
                grad: &grad,
                hess: &hess,
                features,
                params: &params.tree,
                lambda: params.lambda_l2,
                scale: params.learning_rate,
                nodes: Vec::new(),
            };
            b.build(rows.clone(), 0);
            Tree { nodes: b.nodes }
        });
        for (c, tree) in round.into_iter().enumerate() {
            for (i, r) in raw.iter_mut().enumerate() {
                r[c] += tree.leaf_value(&data.x[i])[0];
            }
            trees.push(tree);
            tree_class.push(c);
        }
    }
    Boosted {
        trees,
        tree_class,
        init_scores,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binner_keeps_distinct_values_apart() {
        let data = TrainData {
            x: (0..10).map(|i| [i as f64; N_FEATURES]).collect(),
            y: vec![0; 10],
            n_classes: 1,
        };
        let b = Binner::fit(&data, 255);
        let bins = b.transform(&data.x);
        for w in bins.windows(2) {
            assert!(w[0][0] < w[1][0]);
        }
        let coarse = Binner::fit(&data, 4);
        assert!(coarse.n_bins(0) <= 4);
        assert_eq!(coarse.bin(0, 9.0) as usize, coarse.n_bins(0) - 1);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[2] > p[1] && p[1] > p[0]);
    }
}
