use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::sigmoid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    /// L2 regularization of leaf values.
    pub leaf_l2: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_leaf: 5,
            leaf_l2: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[var] <= threshold` go left.
    Split {
        var: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
}

/// Regression tree stored as a node arena; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &DMatrix<f64>, i: usize) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    var,
                    threshold,
                    left,
                    right,
                    ..
                } => k = if x[(i, *var)] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.nodes.len() == 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    /// Log-odds of the training prior.
    pub base_score: f64,
    pub n_features: usize,
}

impl GbtModel {
    pub fn decision(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                self.base_score
                    + self.learning_rate * self.trees.iter().map(|t| t.predict_row(x, i)).sum::<f64>()
            })
            .collect()
    }

    pub fn predict_proba(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.decision(x).into_iter().map(sigmoid).collect()
    }
}

struct Grower<'a> {
    x: &'a DMatrix<f64>,
    /// Row indices sorted by each feature.
    sorted: &'a [Vec<usize>],
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a GbtConfig,
}

struct BestSplit {
    var: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.cfg.leaf_l2)
    }

    fn best_split(&self, member: &[bool], count: usize, g: f64, h: f64) -> Option<BestSplit> {
        let parent = self.score(g, h);
        let mut best: Option<BestSplit> = None;
        for (var, order) in self.sorted.iter().enumerate() {
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
            let rows: Vec<usize> = order.iter().copied().filter(|&i| member[i]).collect();
            for w in rows.windows(2) {
                let (i, next) = (w[0], w[1]);
                gl += self.grad[i];
                hl += self.hess[i];
                nl += 1;
                let (xi, xn) = (self.x[(i, var)], self.x[(next, var)]);
                if xi == xn || nl < self.cfg.min_leaf || count - nl < self.cfg.min_leaf {
                    continue;
                }
                let gain = 0.5 * (self.score(gl, hl) + self.score(g - gl, h - hl) - parent);
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        var,
                        threshold: xi,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow(&self, member: Vec<bool>, depth: usize, nodes: &mut Vec<Node>) -> usize {
        let (mut g, mut h, mut count) = (0.0, 0.0, 0);
        for (i, &m) in member.iter().enumerate() {
            if m {
                g += self.grad[i];
                h += self.hess[i];
                count += 1;
            }
        }
        let id = nodes.len();
        nodes.push(Node::Leaf {
            value: -g / (h + self.cfg.leaf_l2),
        });
        if depth >= self.cfg.max_depth {
            return id;
        }
        let Some(split) = self.best_split(&member, count, g, h) else {
            return id;
        };
        let mut left = vec![false; member.len()];
        let mut right = vec![false; member.len()];
        for (i, &m) in member.iter().enumerate() {
            if m {
                if self.x[(i, split.var)] <= split.threshold {
                    left[i] = true;
                } else {
                    right[i] = true;
                }
            }
        }
        let l = self.grow(left, depth + 1, nodes);
        let r = self.grow(right, depth + 1, nodes);
        nodes[id] = Node::Split {
            var: split.var,
            threshold: split.threshold,
            gain: split.gain,
            left: l,
            right: r,
        };
        id
    }
}

/// Gradient-boosted regression trees on the logistic loss, with Newton leaf
/// values and exact greedy splits.
pub fn fit_gbt(x: &DMatrix<f64>, y: &[u8], cfg: &GbtConfig) -> Result<GbtModel> {
    let (b, n) = x.shape();
    if y.len() != b {
        return Err(Error::Shape(format!("{} labels for {b} rows", y.len())));
    }
    if b == 0 {
        return Err(Error::EmptyCohort);
    }
    let prior = (y.iter().filter(|&&v| v == 1).count() as f64 / b as f64).clamp(1e-7, 1.0 - 1e-7);
    let base_score = (prior / (1.0 - prior)).ln();
    let sorted: Vec<Vec<usize>> = (0..n)
        .map(|j| {
            let mut idx: Vec<usize> = (0..b).collect();
            idx.sort_by(|&a, &c| x[(a, j)].total_cmp(&x[(c, j)]));
            idx
        })
        .collect();
    let mut margin = vec![base_score; b];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for _ in 0..cfg.n_trees {
        let p: Vec<f64> = margin.iter().map(|&m| sigmoid(m)).collect();
        let grad: Vec<f64> = p.iter().zip(y).map(|(p, &t)| p - t as f64).collect();
        let hess: Vec<f64> = p.iter().map(|p| (p * (1.0 - p)).max(1e-16)).collect();
        let grower = Grower {
            x,
            sorted: &sorted,
            grad: &grad,
            hess: &hess,
            cfg,
        };
        let mut nodes = Vec::new();
        grower.grow(vec![true; b], 0, &mut nodes);
        let tree = Tree { nodes };
        for (i, m) in margin.iter_mut().enumerate() {
            *m += cfg.learning_rate * tree.predict_row(x, i);
        }
        trees.push(tree);
    }
    Ok(GbtModel {
        trees,
        learning_rate: cfg.learning_rate,
        base_score,
        n_features: n,
    })
}

/// Total split gain per variable, normalized to sum to 1 when any split
/// exists.
pub fn gbt_importance(model: &GbtModel) -> Vec<f64> {
    let mut imp = vec![0.0; model.n_features];
    for t in &model.trees {
        for node in &t.nodes {
            if let Node::Split { var, gain, .. } = node {
                imp[*var] += gain;
            }
        }
    }
    let total: f64 = imp.iter().sum();
    if total > 0.0 {
        for v in &mut imp {
            *v /= total;
        }
    }
    imp
}
