//! SMOTE: balance a binary dataset by interpolating between minority rows
//! and their nearest minority neighbours.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ColumnKind, Dataset, ModelError, RngStream};

#[derive(Debug, Error, PartialEq)]
pub enum SmoteError {
    #[error("k must be positive")]
    ZeroK,
    #[error("k = {k} needs more than {k} minority rows, found {minority}")]
    TooFewMinority { k: usize, minority: usize },
    #[error("dataset holds a single class")]
    SingleClass,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Round synthetic categorical and binary coordinates to the nearest
    /// integer code instead of keeping the interpolated value.
    pub round_categorical: bool,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            round_categorical: false,
        }
    }
}

/// The class with fewer rows; stroke on a tie.
pub fn minority_class(data: &Dataset) -> u8 {
    let (neg, pos) = data.class_counts();
    if neg < pos {
        0
    } else {
        1
    }
}

/// For each minority row (in row order), the dataset indices of its `k`
/// nearest other minority rows by Euclidean distance, ties broken by index.
pub fn knn_minority(data: &Dataset, k: usize) -> Result<Vec<Vec<usize>>, SmoteError> {
    let class = minority_class(data);
    let minority: Vec<usize> = (0..data.row_count())
        .filter(|&i| data.labels()[i] == class)
        .collect();
    knn_among(data, &minority, k)
}

fn knn_among(data: &Dataset, rows: &[usize], k: usize) -> Result<Vec<Vec<usize>>, SmoteError> {
    if k == 0 {
        return Err(SmoteError::ZeroK);
    }
    if k >= rows.len() {
        return Err(SmoteError::TooFewMinority {
            k,
            minority: rows.len(),
        });
    }
    let m = data.to_matrix();
    let dist = |a: usize, b: usize| -> f64 {
        m.row(a)
            .iter()
            .zip(m.row(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    };
    Ok(rows
        .par_iter()
        .map(|&a| {
            let mut cand: Vec<(f64, usize)> = rows
                .iter()
                .filter(|&&b| b != a)
                .map(|&b| (dist(a, b), b))
                .collect();
            let cmp = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
            cand.select_nth_unstable_by(k - 1, cmp);
            cand.truncate(k);
            cand.sort_unstable_by(cmp);
            cand.into_iter().map(|(_, b)| b).collect()
        })
        .collect())
}

/// Append synthetic minority rows until both classes have the majority
/// count. Synthetic row `s` is seeded by minority row `s mod m`; it picks one
/// of that row's `k` neighbours uniformly and a gap `u` in [0, 1), giving
/// `x + u (x_nn - x)`. Original rows are kept unchanged and in order.
pub fn oversample(data: &Dataset, cfg: &SmoteConfig, rng: &mut RngStream) -> Result<Dataset, SmoteError> {
    let (neg, pos) = data.class_counts();
    if neg == 0 || pos == 0 {
        return Err(SmoteError::SingleClass);
    }
    if neg == pos {
        return Ok(data.clone());
    }
    let class = minority_class(data);
    let minority: Vec<usize> = (0..data.row_count())
        .filter(|&i| data.labels()[i] == class)
        .collect();
    let neighbours = knn_among(data, &minority, cfg.k_neighbors)?;
    let needed = neg.max(pos) - neg.min(pos);
    let rounded: Vec<bool> = data
        .columns()
        .iter()
        .map(|c| cfg.round_categorical && c.kind != ColumnKind::Continuous)
        .collect();

    let mut rows = Vec::with_capacity(needed);
    for s in 0..needed {
        let seed_pos = s % minority.len();
        let base = minority[seed_pos];
        let nn = neighbours[seed_pos][rng.gen_range(0..cfg.k_neighbors)];
        let gap: f64 = rng.gen();
        let row: Vec<f64> = data
            .columns()
            .iter()
            .zip(&rounded)
            .map(|(c, &round)| {
                let v = c.values[base] + gap * (c.values[nn] - c.values[base]);
                if round {
                    v.round()
                } else {
                    v
                }
            })
            .collect();
        rows.push(row);
    }
    Ok(data.append_rows(&rows, &vec![class; needed], true)?)
}

/// Class counts before and after balancing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub before_no_stroke: usize,
    pub before_stroke: usize,
    pub after_no_stroke: usize,
    pub after_stroke: usize,
    pub synthetic: usize,
}

impl BalanceReport {
    pub fn new(before: &Dataset, after: &Dataset) -> Self {
        let (b0, b1) = before.class_counts();
        let (a0, a1) = after.class_counts();
        Self {
            before_no_stroke: b0,
            before_stroke: b1,
            after_no_stroke: a0,
            after_stroke: a1,
            synthetic: after.synthetic().iter().filter(|&&s| s).count(),
        }
    }
}
