//! Decision trees grown by information gain or Gini gain over binary
//! threshold splits, and bagged random forests built from them.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    check_dim, Classifier, Dataset, Label, Learner, Matrix, ModelError, RngStream, HALF_EXCLUSIVE,
};

/// Gains at or below this are treated as no improvement.
const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("probability {0} is negative")]
    NegativeProbability(f64),
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("split leaves one side empty")]
    EmptySide,
    #[error("partition does not cover each of the {0} rows exactly once")]
    InvalidPartition(usize),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("a forest needs at least one estimator")]
    NoEstimators,
}

impl From<TreeError> for ModelError {
    fn from(e: TreeError) -> Self {
        match e {
            TreeError::EmptyDataset => ModelError::EmptyDataset,
            other => ModelError::Fit(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    None,
    Auto,
    Sqrt,
    Log2,
}

impl MaxFeatures {
    /// Features examined per node out of `d`. `auto` is `sqrt`.
    pub fn count(self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::None => d,
            MaxFeatures::Auto | MaxFeatures::Sqrt => (d as f64).sqrt().ceil() as usize,
            MaxFeatures::Log2 => (d as f64).log2().ceil() as usize,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeHyper {
    pub criterion: Criterion,
    pub max_features: MaxFeatures,
}

fn check_probs(probs: &[f64]) -> Result<(), TreeError> {
    if let Some(&p) = probs.iter().find(|&&p| p < 0.0) {
        return Err(TreeError::NegativeProbability(p));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(TreeError::NotNormalized(sum));
    }
    Ok(())
}

/// Shannon entropy in bits; `0 log 0` is 0.
pub fn entropy(probs: &[f64]) -> Result<f64, TreeError> {
    check_probs(probs)?;
    Ok(entropy_unchecked(probs))
}

fn entropy_unchecked(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum::<f64>()
        .max(0.0)
}

pub fn gini_impurity(probs: &[f64]) -> Result<f64, TreeError> {
    check_probs(probs)?;
    Ok(gini_unchecked(probs))
}

fn gini_unchecked(probs: &[f64]) -> f64 {
    1.0 - probs.iter().map(|p| p * p).sum::<f64>()
}

/// Impurity of a node holding `n0` no-stroke and `n1` stroke rows.
fn impurity(counts: [usize; 2], criterion: Criterion) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let probs = [counts[0] as f64 / n, counts[1] as f64 / n];
    match criterion {
        Criterion::Gini => gini_unchecked(&probs),
        Criterion::Entropy => entropy_unchecked(&probs),
    }
}

/// Parent impurity minus the size-weighted impurity of the two children.
fn gain_from_counts(parent: [usize; 2], left: [usize; 2], criterion: Criterion) -> f64 {
    let right = [parent[0] - left[0], parent[1] - left[1]];
    let n = (parent[0] + parent[1]) as f64;
    let nl = (left[0] + left[1]) as f64;
    let nr = n - nl;
    impurity(parent, criterion)
        - (nl / n) * impurity(left, criterion)
        - (nr / n) * impurity(right, criterion)
}

fn count_labels(labels: &[u8], rows: impl IntoIterator<Item = usize>) -> [usize; 2] {
    let mut c = [0usize; 2];
    for r in rows {
        c[labels[r] as usize] += 1;
    }
    c
}

/// Gain of splitting `labels` into the `left` and `right` index sets.
pub fn split_gain(
    labels: &[u8],
    left: &[usize],
    right: &[usize],
    criterion: Criterion,
) -> Result<f64, TreeError> {
    if left.is_empty() || right.is_empty() {
        return Err(TreeError::EmptySide);
    }
    let mut seen = vec![false; labels.len()];
    for &i in left.iter().chain(right) {
        if i >= labels.len() || std::mem::replace(&mut seen[i], true) {
            return Err(TreeError::InvalidPartition(labels.len()));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(TreeError::InvalidPartition(labels.len()));
    }
    let parent = count_labels(labels, 0..labels.len());
    let l = count_labels(labels, left.iter().copied());
    Ok(gain_from_counts(parent, l, criterion))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Midpoint strictly below `hi` so that `x <= t` separates `lo` from `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

/// Best threshold split of `rows` over `features`. Candidates are midpoints
/// between consecutive distinct values; rows with `x <= threshold` go left.
/// Ties go to the lower feature index, then the lower threshold.
pub fn best_split(
    data: &Matrix,
    labels: &[u8],
    rows: &[usize],
    features: &[usize],
    criterion: Criterion,
) -> Option<Split> {
    if rows.len() < 2 {
        return None;
    }
    let parent = count_labels(labels, rows.iter().copied());
    if parent[0] == 0 || parent[1] == 0 {
        return None;
    }
    let mut features = features.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut best: Option<Split> = None;
    let mut column: Vec<(f64, u8)> = Vec::with_capacity(rows.len());
    for &f in &features {
        column.clear();
        column.extend(rows.iter().map(|&r| (data.data[r * data.cols + f], labels[r])));
        column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0usize; 2];
        for i in 0..column.len() - 1 {
            left[column[i].1 as usize] += 1;
            let (lo, hi) = (column[i].0, column[i + 1].0);
            if lo == hi {
                continue;
            }
            let gain = gain_from_counts(parent, left, criterion);
            if gain > best.map_or(GAIN_EPS, |b| b.gain + GAIN_EPS) {
                best = Some(Split {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    gain,
                });
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// `[no stroke, stroke]` training rows that reached this leaf.
        counts: [u64; 2],
        prediction: Label,
        stroke_fraction: f64,
    },
}

/// Fitted decision tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub hyper: TreeHyper,
    pub n_features: usize,
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    fn leaf(&self, x: &[f64]) -> &TreeNode {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                leaf => return leaf,
            }
        }
    }

    fn stroke_fraction(&self, x: &[f64]) -> f64 {
        match self.leaf(x) {
            TreeNode::Leaf { stroke_fraction, .. } => *stroke_fraction,
            TreeNode::Internal { .. } => unreachable!(),
        }
    }

    fn vote(&self, x: &[f64]) -> Label {
        match self.leaf(x) {
            TreeNode::Leaf { prediction, .. } => *prediction,
            TreeNode::Internal { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Internal { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

impl Classifier for DecisionTree {
    fn n_features(&self) -> usize {
        self.n_features
    }

    /// Stroke fraction of the leaf reached by `x`.
    fn score(&self, x: &[f64]) -> Result<f64, ModelError> {
        check_dim(x, self.n_features)?;
        Ok(self.stroke_fraction(x))
    }

    /// Leaves split evenly predict no stroke.
    fn decision_threshold(&self) -> f64 {
        HALF_EXCLUSIVE
    }
}

fn make_leaf(counts: [usize; 2]) -> TreeNode {
    let n = (counts[0] + counts[1]) as f64;
    TreeNode::Leaf {
        counts: [counts[0] as u64, counts[1] as u64],
        prediction: if counts[1] > counts[0] {
            Label::Stroke
        } else {
            Label::NoStroke
        },
        stroke_fraction: counts[1] as f64 / n,
    }
}

/// Grow a tree on `rows` (repeats allowed) of `data`.
fn grow(
    data: &Matrix,
    labels: &[u8],
    rows: Vec<usize>,
    hyper: TreeHyper,
    rng: &mut RngStream,
) -> DecisionTree {
    let d = data.cols;
    let k = hyper.max_features.count(d);
    let all: Vec<usize> = (0..d).collect();
    let mut nodes: Vec<TreeNode> = Vec::new();
    // (slot, rows) pending expansion; slots are reserved in the arena.
    nodes.push(make_leaf(count_labels(labels, rows.iter().copied())));
    let mut stack = vec![(0usize, rows)];
    while let Some((slot, rows)) = stack.pop() {
        let counts = count_labels(labels, rows.iter().copied());
        if rows.len() < 2 || counts[0] == 0 || counts[1] == 0 {
            continue;
        }
        let subset: Vec<usize> = if k < d {
            sample(rng, d, k).into_vec()
        } else {
            all.clone()
        };
        let Some(split) = best_split(data, labels, &rows, &subset, hyper.criterion) else {
            continue;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| data.data[r * d + split.feature] <= split.threshold);
        let left = nodes.len();
        nodes.push(make_leaf(count_labels(labels, left_rows.iter().copied())));
        let right = nodes.len();
        nodes.push(make_leaf(count_labels(labels, right_rows.iter().copied())));
        nodes[slot] = TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        stack.push((right, right_rows));
        stack.push((left, left_rows));
    }
    DecisionTree {
        hyper,
        n_features: d,
        nodes,
    }
}

/// Fully grown tree: growth stops at pure nodes, nodes with fewer than two
/// rows, or when no split has positive gain.
pub fn fit_tree(
    train: &Dataset,
    hyper: TreeHyper,
    rng: &mut RngStream,
) -> Result<DecisionTree, TreeError> {
    if train.row_count() == 0 {
        return Err(TreeError::EmptyDataset);
    }
    let m = train.to_matrix();
    Ok(grow(&m, train.labels(), (0..train.row_count()).collect(), hyper, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForestHyper {
    pub n_estimators: usize,
    pub criterion: Criterion,
    pub max_features: MaxFeatures,
    /// Draw a bootstrap sample per tree. Off only in tests comparing a
    /// one-tree forest against a plain tree.
    #[serde(default = "default_true")]
    pub bootstrap: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub hyper: ForestHyper,
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn votes_for_stroke(&self, x: &[f64]) -> usize {
        self.trees.iter().filter(|t| t.vote(x).is_stroke()).count()
    }
}

impl Classifier for RandomForest {
    fn n_features(&self) -> usize {
        self.n_features
    }

    /// Fraction of trees voting stroke.
    fn score(&self, x: &[f64]) -> Result<f64, ModelError> {
        check_dim(x, self.n_features)?;
        Ok(self.votes_for_stroke(x) as f64 / self.trees.len() as f64)
    }

    /// Tied votes go to no stroke.
    fn decision_threshold(&self) -> f64 {
        HALF_EXCLUSIVE
    }
}

/// Bagged trees; tree `t` draws from the child stream `tree<t>` so the
/// result does not depend on thread scheduling.
pub fn fit_forest(
    train: &Dataset,
    hyper: ForestHyper,
    rng: &mut RngStream,
) -> Result<RandomForest, TreeError> {
    if hyper.n_estimators == 0 {
        return Err(TreeError::NoEstimators);
    }
    let n = train.row_count();
    if n == 0 {
        return Err(TreeError::EmptyDataset);
    }
    let m = train.to_matrix();
    let tree_hyper = TreeHyper {
        criterion: hyper.criterion,
        max_features: hyper.max_features,
    };
    let trees = (0..hyper.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut stream = rng.child(&format!("tree{t}"));
            let rows: Vec<usize> = if hyper.bootstrap {
                (0..n).map(|_| stream.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(&m, train.labels(), rows, tree_hyper, &mut stream)
        })
        .collect();
    Ok(RandomForest {
        hyper,
        n_features: m.cols,
        trees,
    })
}

impl Learner for TreeHyper {
    fn fit(&self, train: &Dataset, rng: &mut RngStream) -> Result<Box<dyn Classifier>, ModelError> {
        Ok(Box::new(fit_tree(train, *self, rng)?))
    }
}

impl Learner for ForestHyper {
    fn fit(&self, train: &Dataset, rng: &mut RngStream) -> Result<Box<dyn Classifier>, ModelError> {
        Ok(Box::new(fit_forest(train, *self, rng)?))
    }
}
