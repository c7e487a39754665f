//! Soft-margin SVM with an RBF kernel, trained on the dual by sequential
//! minimal optimization.
//!
//! The dual is solved in its minimization form
//! `f(a) = 1/2 a'Qa - e'a` with `Q_ij = y_i y_j k(x_i, x_j)`, subject to
//! `0 <= a_i <= C` and `sum a_i y_i = 0`. Each step picks the maximal
//! violating pair: `i` maximizes `-y_t grad_t` over the indices that may move
//! up, `j` minimizes it over those that may move down, which is the pair with
//! the largest prediction-error gap `|E_i - E_j|`. The box bound `C` plays the
//! role of the hinge-loss regularizer; a penalty `lambda |w|^2` over `n` rows
//! corresponds to `C = 1 / (2 n lambda)`.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{check_dim, Classifier, Dataset, Learner, Matrix, ModelError, RngStream};

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("kernel inputs differ in dimension ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("training data contains a single class")]
    SingleClass,
    #[error("C and gamma must be positive (C = {c}, gamma = {gamma})")]
    InvalidHyper { c: f64, gamma: f64 },
}

impl From<SvmError> for ModelError {
    fn from(e: SvmError) -> Self {
        match e {
            SvmError::SingleClass => ModelError::SingleClass,
            SvmError::DimensionMismatch(got, expected) => {
                ModelError::DimensionMismatch { got, expected }
            }
            other => ModelError::Fit(other.to_string()),
        }
    }
}

pub const DEFAULT_TOLERANCE: f64 = 1e-3;
const DEFAULT_CACHE_BYTES: usize = 128 << 20;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmHyper {
    pub c: f64,
    pub gamma: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// SMO iteration cap; `None` means `max(10^7, 100 n)`.
    #[serde(default)]
    pub max_passes: Option<usize>,
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

impl SvmHyper {
    pub fn new(c: f64, gamma: f64) -> Self {
        Self {
            c,
            gamma,
            tolerance: DEFAULT_TOLERANCE,
            max_passes: None,
        }
    }
}

pub fn rbf_kernel(x1: &[f64], x2: &[f64], gamma: f64) -> Result<f64, SvmError> {
    if x1.len() != x2.len() {
        return Err(SvmError::DimensionMismatch(x1.len(), x2.len()));
    }
    Ok(rbf(x1, x2, gamma))
}

#[inline]
fn rbf(x1: &[f64], x2: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// Least-recently-used cache of kernel matrix rows.
struct KernelCache<'a> {
    points: &'a Matrix,
    gamma: f64,
    rows: Vec<Option<Vec<f64>>>,
    stamp: Vec<u64>,
    clock: u64,
    cached: usize,
    capacity: usize,
}

impl<'a> KernelCache<'a> {
    fn new(points: &'a Matrix, gamma: f64, bytes: usize) -> Self {
        let n = points.rows;
        let per_row = (n * std::mem::size_of::<f64>()).max(1);
        Self {
            points,
            gamma,
            rows: vec![None; n],
            stamp: vec![0; n],
            clock: 0,
            cached: 0,
            capacity: (bytes / per_row).clamp(2, n.max(2)),
        }
    }

    fn ensure(&mut self, i: usize, keep: usize) {
        self.clock += 1;
        self.stamp[i] = self.clock;
        if self.rows[i].is_some() {
            return;
        }
        if self.cached >= self.capacity {
            let victim = (0..self.rows.len())
                .filter(|&t| t != keep && self.rows[t].is_some())
                .min_by_key(|&t| self.stamp[t])
                .expect("cache holds at least two rows");
            self.rows[victim] = None;
            self.cached -= 1;
        }
        let xi = self.points.row(i);
        let row = (0..self.points.rows)
            .map(|t| rbf(xi, self.points.row(t), self.gamma))
            .collect();
        self.rows[i] = Some(row);
        self.cached += 1;
    }

    fn pair(&mut self, i: usize, j: usize) -> (&[f64], &[f64]) {
        self.ensure(i, j);
        self.ensure(j, i);
        (
            self.rows[i].as_deref().unwrap(),
            self.rows[j].as_deref().unwrap(),
        )
    }
}

/// Result of the dual optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Dual objective `sum a - 1/2 a'Qa` (the maximization form).
    pub objective: f64,
    /// Objective after every iteration, when tracing was requested.
    pub trace: Vec<f64>,
}

/// Options for [`solve_dual`].
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tolerance: f64,
    pub max_iter: usize,
    pub cache_bytes: usize,
    pub trace: bool,
}

fn dual_objective(alpha: &[f64], grad: &[f64]) -> f64 {
    // f = 1/2 a'(G + e) - e'a = 1/2 sum a (G - 1); the dual value is -f.
    -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
}

/// SMO over `points` (already scaled) with labels `y` in {-1, +1}.
pub fn solve_dual(points: &Matrix, y: &[f64], c: f64, gamma: f64, opts: SolveOptions) -> DualSolution {
    let n = points.rows;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut cache = KernelCache::new(points, gamma, opts.cache_bytes);
    let mut trace = Vec::new();
    let up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let mut converged = false;
    let (mut m_up, mut m_low): (f64, f64);
    loop {
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        let (mut gmax, mut gmin) = (f64::NEG_INFINITY, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        m_up = gmax;
        m_low = gmin;
        if i == usize::MAX || j == usize::MAX || gmax - gmin < opts.tolerance {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let (ki, kj) = cache.pair(i, j);
        let eta = (ki[i] + kj[j] - 2.0 * ki[j]).max(TAU);
        // Move a_i by +y_i t and a_j by -y_j t; t is clipped to the box.
        let mut step = (gmax - gmin) / eta;
        let bound_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let bound_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        step = step.min(bound_i).min(bound_j);

        alpha[i] += y[i] * step;
        alpha[j] -= y[j] * step;
        if step == bound_i {
            alpha[i] = if y[i] > 0.0 { c } else { 0.0 };
        }
        if step == bound_j {
            alpha[j] = if y[j] > 0.0 { 0.0 } else { c };
        }
        for t in 0..n {
            grad[t] += step * y[t] * (ki[t] - kj[t]);
        }
        if opts.trace {
            trace.push(dual_objective(&alpha, &grad));
        }
    }

    let free: Vec<f64> = (0..n)
        .filter(|&t| alpha[t] > 0.0 && alpha[t] < c)
        .map(|t| -y[t] * grad[t])
        .collect();
    let bias = if !free.is_empty() {
        free.iter().sum::<f64>() / free.len() as f64
    } else if m_up.is_finite() && m_low.is_finite() {
        (m_up + m_low) / 2.0
    } else {
        0.0
    };
    DualSolution {
        objective: dual_objective(&alpha, &grad),
        alpha,
        bias,
        iterations,
        converged,
        trace,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    #[inline]
    fn scale(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            (v - self.min) / span
        } else {
            0.0
        }
    }
}

/// Fitted SVM. Support vectors are stored in the internally scaled space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub hyper: SvmHyper,
    pub scaling: Vec<FeatureRange>,
    pub support_vectors: Vec<Vec<f64>>,
    /// `a_i` of each stored support vector.
    pub alpha: Vec<f64>,
    /// `a_i y_i` of each stored support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

impl SvmModel {
    pub fn scale(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.scaling).map(|(&v, r)| r.scale(v)).collect()
    }

    /// `sum a_i y_i k(x_i, x) + b`.
    pub fn decision_function(&self, x: &[f64]) -> Result<f64, ModelError> {
        check_dim(x, self.scaling.len())?;
        let z = self.scale(x);
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, coef)| coef * rbf(sv, &z, self.hyper.gamma))
            .sum::<f64>()
            + self.bias)
    }
}

impl Classifier for SvmModel {
    fn n_features(&self) -> usize {
        self.scaling.len()
    }

    fn score(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.decision_function(x)
    }

    fn decision_threshold(&self) -> f64 {
        0.0
    }
}

/// Min-max ranges of the training columns.
pub fn fit_scaling(data: &Matrix) -> Vec<FeatureRange> {
    (0..data.cols)
        .map(|j| {
            let (min, max) = (0..data.rows).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                let v = data.data[i * data.cols + j];
                (lo.min(v), hi.max(v))
            });
            if data.rows == 0 {
                FeatureRange { min: 0.0, max: 0.0 }
            } else {
                FeatureRange { min, max }
            }
        })
        .collect()
}

/// Train on `train`; features are min-max scaled to [0, 1] first. Hitting the
/// iteration cap is not an error: the model is returned with
/// `converged == false`.
pub fn fit_svm(train: &Dataset, hyper: SvmHyper, _rng: &mut RngStream) -> Result<SvmModel, SvmError> {
    fit_svm_with(train, hyper, DEFAULT_CACHE_BYTES, false).map(|(m, _)| m)
}

/// [`fit_svm`] with an explicit kernel-cache budget; optionally returns the
/// objective trace and the full dual vector.
pub fn fit_svm_with(
    train: &Dataset,
    hyper: SvmHyper,
    cache_bytes: usize,
    trace: bool,
) -> Result<(SvmModel, DualSolution), SvmError> {
    if !(hyper.c > 0.0 && hyper.gamma > 0.0) {
        return Err(SvmError::InvalidHyper {
            c: hyper.c,
            gamma: hyper.gamma,
        });
    }
    let (neg, pos) = train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(SvmError::SingleClass);
    }
    let raw = train.to_matrix();
    let scaling = fit_scaling(&raw);
    let mut scaled = raw;
    for i in 0..scaled.rows {
        for j in 0..scaled.cols {
            let v = &mut scaled.data[i * scaled.cols + j];
            *v = scaling[j].scale(*v);
        }
    }
    let y: Vec<f64> = train
        .labels()
        .iter()
        .map(|&l| if l == 1 { 1.0 } else { -1.0 })
        .collect();
    let n = y.len();
    let opts = SolveOptions {
        tolerance: hyper.tolerance,
        max_iter: hyper.max_passes.unwrap_or_else(|| (100 * n).max(10_000_000)),
        cache_bytes,
        trace,
    };
    let sol = solve_dual(&scaled, &y, hyper.c, hyper.gamma, opts);
    if !sol.converged {
        warn!(
            "SMO stopped after {} iterations without reaching tolerance {} (C = {}, gamma = {})",
            sol.iterations, hyper.tolerance, hyper.c, hyper.gamma
        );
    }
    let sv: Vec<usize> = (0..n).filter(|&t| sol.alpha[t] > 0.0).collect();
    let model = SvmModel {
        hyper,
        scaling,
        support_vectors: sv.iter().map(|&t| scaled.row(t).to_vec()).collect(),
        alpha: sv.iter().map(|&t| sol.alpha[t]).collect(),
        dual_coef: sv.iter().map(|&t| sol.alpha[t] * y[t]).collect(),
        bias: sol.bias,
        converged: sol.converged,
        iterations: sol.iterations,
        objective: sol.objective,
    };
    Ok((model, sol))
}

impl Learner for SvmHyper {
    fn fit(&self, train: &Dataset, rng: &mut RngStream) -> Result<Box<dyn Classifier>, ModelError> {
        Ok(Box::new(fit_svm(train, *self, rng)?))
    }
}
