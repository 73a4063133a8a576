//! CART trees with bootstrap bagging.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{data_err, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestTask {
    Regression,
    /// Labels are class indices `0, 1, ..`.
    Classification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; √d (classification) or d/3 (regression)
    /// when unset.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 100,
            max_depth: 12,
            min_leaf: 5,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn features_per_split(&self, task: ForestTask, d: usize) -> usize {
        let rule = match task {
            ForestTask::Classification => (d as f64).sqrt().floor() as usize,
            ForestTask::Regression => d / 3,
        };
        self.max_features.unwrap_or(rule).clamp(1, d)
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Debug)]
pub struct RandomForest {
    pub task: ForestTask,
    classes: usize,
    trees: Vec<Tree>,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    task: ForestTask,
    classes: usize,
    cfg: &'a ForestConfig,
    mtry: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        match self.task {
            ForestTask::Regression => idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64,
            ForestTask::Classification => {
                let counts = self.class_counts(idx);
                argmax_first(&counts) as f64
            }
        }
    }

    fn class_counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &i in idx {
            c[self.y[i] as usize] += 1;
        }
        c
    }

    fn pure(&self, idx: &[usize]) -> bool {
        let first = self.y[idx[0]];
        idx.iter().all(|&i| self.y[i] == first)
    }

    fn build(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_value(idx)));
        if depth >= self.cfg.max_depth || idx.len() < 2 * self.cfg.min_leaf || self.pure(idx) {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(idx, rng) else {
            return id;
        };
        let mut cut = 0;
        for k in 0..idx.len() {
            if self.x.get(idx[k], feature) <= threshold {
                idx.swap(k, cut);
                cut += 1;
            }
        }
        let (l, r) = idx.split_at_mut(cut);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }

    /// Lowest weighted child impurity over a random feature subset; each
    /// child keeps at least `min_leaf` rows.
    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let n = idx.len();
        let min_leaf = self.cfg.min_leaf.max(1);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<(f64, f64)> = Vec::with_capacity(n);
        for feature in sample(rng, self.x.cols(), self.mtry).into_vec() {
            order.clear();
            order.extend(idx.iter().map(|&i| (self.x.get(i, feature), self.y[i])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut scan = Scan::new(self.task, self.classes, &order);
            for k in 1..n {
                scan.move_left(order[k - 1].1);
                if k < min_leaf || n - k < min_leaf || order[k - 1].0 == order[k].0 {
                    continue;
                }
                let cost = scan.cost();
                if best.is_none_or(|(c, _, _)| cost < c - 1e-12) {
                    best = Some((cost, feature, 0.5 * (order[k - 1].0 + order[k].0)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Running sufficient statistics for a left/right partition sweep.
struct Scan {
    task: ForestTask,
    n: f64,
    left_n: f64,
    left_sum: f64,
    left_sq: f64,
    total_sum: f64,
    total_sq: f64,
    left_counts: Vec<f64>,
    total_counts: Vec<f64>,
}

impl Scan {
    fn new(task: ForestTask, classes: usize, order: &[(f64, f64)]) -> Self {
        let mut total_counts = vec![0.0; if task == ForestTask::Classification { classes } else { 0 }];
        let (mut s, mut q) = (0.0, 0.0);
        for &(_, y) in order {
            s += y;
            q += y * y;
            if task == ForestTask::Classification {
                total_counts[y as usize] += 1.0;
            }
        }
        Scan {
            task,
            n: order.len() as f64,
            left_n: 0.0,
            left_sum: 0.0,
            left_sq: 0.0,
            total_sum: s,
            total_sq: q,
            left_counts: vec![0.0; total_counts.len()],
            total_counts,
        }
    }

    fn move_left(&mut self, y: f64) {
        self.left_n += 1.0;
        self.left_sum += y;
        self.left_sq += y * y;
        if self.task == ForestTask::Classification {
            self.left_counts[y as usize] += 1.0;
        }
    }

    /// Sum of child impurities weighted by child size.
    fn cost(&self) -> f64 {
        let (ln, rn) = (self.left_n, self.n - self.left_n);
        match self.task {
            ForestTask::Regression => {
                let rs = self.total_sum - self.left_sum;
                let rq = self.total_sq - self.left_sq;
                (self.left_sq - self.left_sum * self.left_sum / ln) + (rq - rs * rs / rn)
            }
            ForestTask::Classification => {
                let (mut sl, mut sr) = (0.0, 0.0);
                for (t, l) in self.total_counts.iter().zip(&self.left_counts) {
                    sl += l * l;
                    sr += (t - l) * (t - l);
                }
                (ln - sl / ln) + (rn - sr / rn)
            }
        }
    }
}

fn argmax_first(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

impl RandomForest {
    pub fn fit(x: &Matrix, y: &[f64], task: ForestTask, cfg: &ForestConfig) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(data_err("random forest needs a non-empty training set"));
        }
        if y.len() != x.rows() {
            return Err(data_err(format!("{} targets for {} rows", y.len(), x.rows())));
        }
        if cfg.trees == 0 {
            return Err(data_err("random forest needs at least one tree"));
        }
        if x.has_non_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(data_err("random forest inputs must be finite"));
        }
        let classes = match task {
            ForestTask::Regression => 0,
            ForestTask::Classification => {
                if let Some(v) = y.iter().find(|v| v.fract() != 0.0 || **v < 0.0) {
                    return Err(data_err(format!("class label {v} is not a nonnegative integer")));
                }
                y.iter().fold(0.0f64, |a, &b| a.max(b)) as usize + 1
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mtry = cfg.features_per_split(task, x.cols());
        let n = x.rows();
        let mut trees = Vec::with_capacity(cfg.trees);
        for _ in 0..cfg.trees {
            let mut idx: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut b = Builder {
                x,
                y,
                task,
                classes,
                cfg,
                mtry,
                nodes: Vec::new(),
            };
            b.build(&mut idx, 0, &mut rng);
            trees.push(Tree { nodes: b.nodes });
        }
        Ok(RandomForest { task, classes, trees })
    }

    /// Mean over trees (regression) or majority vote, ties to the lower
    /// class (classification).
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows())
            .map(|r| {
                let row = x.row(r);
                match self.task {
                    ForestTask::Regression => self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64,
                    ForestTask::Classification => {
                        let mut votes = vec![0; self.classes];
                        for t in &self.trees {
                            votes[t.predict(row) as usize] += 1;
                        }
                        argmax_first(&votes) as f64
                    }
                }
            })
            .collect()
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }
}

pub fn accuracy(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

pub fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / truth.len() as f64
}
