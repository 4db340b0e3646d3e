//! Gradient-boosted regression trees with a softmax objective: every round
//! fits one depth-limited tree per class to the second-order expansion of the
//! multinomial log-loss.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{softmax3, TrainConfig};
use crate::data::{Simplex3, N_CLASSES};

const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    /// `rounds[r][c]` is the tree for class `c` in round `r`.
    rounds: Vec<[Tree; N_CLASSES]>,
}

struct TreeBuilder<'a> {
    x: &'a DMatrix<f64>,
    sorted: &'a [Vec<usize>],
    grad: &'a [f64],
    hess: &'a [f64],
    lambda: f64,
    min_child_weight: f64,
    learning_rate: f64,
    max_depth: usize,
    nodes: Vec<Node>,
    /// Node currently owning each row.
    owner: Vec<usize>,
}

impl TreeBuilder<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -self.learning_rate * g / (h + self.lambda)
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.lambda)
    }

    fn build(mut self) -> Tree {
        let rows: Vec<usize> = (0..self.x.nrows()).collect();
        self.grow(0, &rows, 0);
        Tree { nodes: self.nodes }
    }

    fn grow(&mut self, node: usize, rows: &[usize], depth: usize) {
        let g_tot: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h_tot: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        if node == self.nodes.len() {
            self.nodes.push(Node::Leaf { value: 0.0 });
        }
        self.nodes[node] = Node::Leaf {
            value: self.leaf_value(g_tot, h_tot),
        };
        if depth >= self.max_depth || rows.len() < 2 {
            return;
        }
        for &i in rows {
            self.owner[i] = node;
        }
        let parent = self.score(g_tot, h_tot);
        let mut best: Option<(f64, usize, f64)> = None;
        for (feature, order) in self.sorted.iter().enumerate() {
            let (mut gl, mut hl) = (0.0, 0.0);
            let mut prev: Option<f64> = None;
            for &i in order.iter().filter(|&&i| self.owner[i] == node) {
                let v = self.x[(i, feature)];
                if let Some(p) = prev {
                    if v > p && hl >= self.min_child_weight && h_tot - hl >= self.min_child_weight {
                        let gain = self.score(gl, hl) + self.score(g_tot - gl, h_tot - hl) - parent;
                        if gain > MIN_GAIN && best.is_none_or(|b| gain > b.0) {
                            best = Some((gain, feature, 0.5 * (p + v)));
                        }
                    }
                }
                gl += self.grad[i];
                hl += self.hess[i];
                prev = Some(v);
            }
        }
        let Some((_, feature, threshold)) = best else {
            return;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x[(i, feature)] < threshold);
        let left = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let right = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        self.nodes[node] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        self.grow(left, &left_rows, depth + 1);
        self.grow(right, &right_rows, depth + 1);
    }
}

impl GbtModel {
    pub fn fit(x: &DMatrix<f64>, y: &[u8], config: &TrainConfig) -> Self {
        let (n, f) = x.shape();
        let sorted: Vec<Vec<usize>> = (0..f)
            .map(|j| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| x[(a, j)].total_cmp(&x[(b, j)]).then(a.cmp(&b)));
                idx
            })
            .collect();
        let mut margins = vec![[0.0; N_CLASSES]; n];
        let mut rounds = Vec::with_capacity(config.gbt_rounds);
        for _ in 0..config.gbt_rounds {
            let probs: Vec<[f64; N_CLASSES]> =
                margins.iter().map(|m| softmax3(*m).probs()).collect();
            let trees: [Tree; N_CLASSES] = std::array::from_fn(|c| {
                let grad: Vec<f64> = (0..n)
                    .map(|i| probs[i][c] - f64::from(u8::from(y[i] as usize == c)))
                    .collect();
                let hess: Vec<f64> = (0..n)
                    .map(|i| (probs[i][c] * (1.0 - probs[i][c])).max(1e-16))
                    .collect();
                TreeBuilder {
                    x,
                    sorted: &sorted,
                    grad: &grad,
                    hess: &hess,
                    lambda: config.gbt_lambda,
                    min_child_weight: config.gbt_min_child_weight,
                    learning_rate: config.gbt_learning_rate,
                    max_depth: config.gbt_depth,
                    nodes: Vec::new(),
                    owner: vec![usize::MAX; n],
                }
                .build()
            });
            let mut row = vec![0.0; f];
            for (i, m) in margins.iter_mut().enumerate() {
                row.iter_mut().enumerate().for_each(|(j, v)| *v = x[(i, j)]);
                for c in 0..N_CLASSES {
                    m[c] += trees[c].predict(&row);
                }
            }
            rounds.push(trees);
        }
        GbtModel { rounds }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Simplex3 {
        let mut m = [0.0; N_CLASSES];
        for trees in &self.rounds {
            for c in 0..N_CLASSES {
                m[c] += trees[c].predict(x);
            }
        }
        softmax3(m)
    }
}
