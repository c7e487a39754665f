//! L2-penalized logistic regression.
//!
//! The objective is the summed log loss plus `reg * |beta|^2`, where the
//! intercept is not penalized:
//!
//! `L(b0, beta) = sum_i [ln(1 + e^{z_i}) - y_i z_i] + reg * sum_j beta_j^2`,
//! `z_i = b0 + beta . x_i`.
//!
//! Three solvers minimize it: damped Newton-Raphson, gradient descent with
//! backtracking line search, and stochastic average gradient (SAG).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::model::{
    check_dim, Classifier, Dataset, Learner, Matrix, ModelError, RngStream, HALF_EXCLUSIVE,
};

pub const DEFAULT_MAX_ITER: usize = 3000;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Newton,
    Gradient,
    Sag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrHyper {
    pub reg: f64,
    pub solver: Solver,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

impl LrHyper {
    pub fn new(reg: f64, solver: Solver) -> Self {
        Self {
            reg,
            solver,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub solver: Solver,
    pub reg: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_loss: f64,
    pub gradient_norm: f64,
    /// Objective after every iteration (epoch for SAG).
    #[serde(skip)]
    pub loss_trace: Vec<f64>,
}

/// `e^z / (1 + e^z)` without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LrModel {
    pub fn linear_term(&self, x: &[f64]) -> Result<f64, ModelError> {
        check_dim(x, self.coefficients.len())?;
        Ok(self.intercept + dot(&self.coefficients, x))
    }

    pub fn sigmoid_prob(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok(sigmoid(self.linear_term(x)?))
    }
}

/// Probability of stroke for `x`.
pub fn sigmoid_prob(model: &LrModel, x: &[f64]) -> Result<f64, ModelError> {
    model.sigmoid_prob(x)
}

impl Classifier for LrModel {
    fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn score(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.sigmoid_prob(x)
    }

    fn decision_threshold(&self) -> f64 {
        HALF_EXCLUSIVE
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn z_of(params: &[f64], x: &[f64]) -> f64 {
    params[0] + dot(&params[1..], x)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Penalized loss only.
pub fn loss(params: &[f64], data: &Matrix, y: &[u8], reg: f64) -> f64 {
    let mut l = 0.0;
    for i in 0..data.rows {
        let z = z_of(params, data.row(i));
        l += softplus(z) - y[i] as f64 * z;
    }
    l + reg * params[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Penalized loss and its gradient with respect to `[b0, beta...]`.
pub fn loss_and_gradient(params: &[f64], data: &Matrix, y: &[u8], reg: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.len()];
    let mut l = 0.0;
    for i in 0..data.rows {
        let x = data.row(i);
        let z = z_of(params, x);
        let yi = y[i] as f64;
        l += softplus(z) - yi * z;
        let r = sigmoid(z) - yi;
        grad[0] += r;
        for (g, &xj) in grad[1..].iter_mut().zip(x) {
            *g += r * xj;
        }
    }
    for (g, &b) in grad[1..].iter_mut().zip(&params[1..]) {
        *g += 2.0 * reg * b;
        l += reg * b * b;
    }
    (l, grad)
}

fn hessian(params: &[f64], data: &Matrix, reg: f64) -> Vec<Vec<f64>> {
    let p = params.len();
    let mut h = vec![vec![0.0; p]; p];
    let mut xt = vec![1.0; p];
    for i in 0..data.rows {
        xt[1..].copy_from_slice(data.row(i));
        let s = sigmoid(z_of(params, data.row(i)));
        let w = s * (1.0 - s);
        for a in 0..p {
            let wa = w * xt[a];
            for b in a..p {
                h[a][b] += wa * xt[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            h[a][b] = h[b][a];
        }
        if a > 0 {
            h[a][a] += 2.0 * reg;
        }
    }
    h
}

/// Solve `h x = g` by Cholesky, adding diagonal jitter if `h` is not
/// numerically positive definite.
fn solve_spd(h: &[Vec<f64>], g: &[f64]) -> Vec<f64> {
    let p = g.len();
    let scale = (0..p).map(|i| h[i][i].abs()).fold(0.0, f64::max).max(1.0);
    let mut jitter = 0.0;
    loop {
        let mut l = vec![vec![0.0; p]; p];
        let mut ok = true;
        'outer: for i in 0..p {
            for j in 0..=i {
                let mut s = h[i][j] + if i == j { jitter } else { 0.0 };
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    if s <= 0.0 {
                        ok = false;
                        break 'outer;
                    }
                    l[i][i] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        if ok {
            let mut z = vec![0.0; p];
            for i in 0..p {
                z[i] = (g[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
            }
            let mut x = vec![0.0; p];
            for i in (0..p).rev() {
                x[i] = (z[i] - (i + 1..p).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
            }
            return x;
        }
        jitter = if jitter == 0.0 { 1e-10 * scale } else { jitter * 10.0 };
    }
}

const ARMIJO: f64 = 1e-4;

struct Fit {
    params: Vec<f64>,
    converged: bool,
    iterations: usize,
    trace: Vec<f64>,
}

fn fit_newton(data: &Matrix, y: &[u8], hyper: &LrHyper) -> Fit {
    let mut params = vec![0.0; data.cols + 1];
    let (mut l, mut g) = loss_and_gradient(&params, data, y, hyper.reg);
    let mut trace = vec![l];
    let mut iterations = 0;
    while norm(&g) >= hyper.tol && iterations < hyper.max_iter {
        iterations += 1;
        let dir = solve_spd(&hessian(&params, data, hyper.reg), &g);
        let slope = dot(&g, &dir);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = params.iter().zip(&dir).map(|(p, d)| p - t * d).collect();
            let lc = loss(&cand, data, y, hyper.reg);
            if lc <= l - ARMIJO * t * slope {
                accepted = Some((cand, lc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, _)) = accepted else { break };
        params = cand;
        (l, g) = loss_and_gradient(&params, data, y, hyper.reg);
        trace.push(l);
    }
    Fit {
        converged: norm(&g) < hyper.tol,
        params,
        iterations,
        trace,
    }
}

fn fit_gradient(data: &Matrix, y: &[u8], hyper: &LrHyper) -> Fit {
    let mut params = vec![0.0; data.cols + 1];
    let (mut l, mut g) = loss_and_gradient(&params, data, y, hyper.reg);
    let mut trace = vec![l];
    let mut iterations = 0;
    let mut step = 1.0 / lipschitz_sum(data, hyper.reg);
    while norm(&g) >= hyper.tol && iterations < hyper.max_iter {
        iterations += 1;
        let gg = dot(&g, &g);
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = params.iter().zip(&g).map(|(p, d)| p - step * d).collect();
            let lc = loss(&cand, data, y, hyper.reg);
            if lc <= l - ARMIJO * step * gg {
                accepted = Some(cand);
                break;
            }
            step *= 0.5;
        }
        let Some(cand) = accepted else { break };
        params = cand;
        (l, g) = loss_and_gradient(&params, data, y, hyper.reg);
        trace.push(l);
        step *= 2.0;
    }
    Fit {
        converged: norm(&g) < hyper.tol,
        params,
        iterations,
        trace,
    }
}

/// Upper bound on the curvature of the summed objective.
fn lipschitz_sum(data: &Matrix, reg: f64) -> f64 {
    let sq: f64 = (0..data.rows)
        .map(|i| 1.0 + data.row(i).iter().map(|v| v * v).sum::<f64>())
        .sum();
    0.25 * sq + 2.0 * reg
}

/// SAG on the averaged objective `L / n`; one iteration is one epoch over a
/// freshly shuffled row order.
fn fit_sag(data: &Matrix, y: &[u8], hyper: &LrHyper, rng: &mut RngStream) -> Fit {
    let n = data.rows;
    let p = data.cols + 1;
    let mut params = vec![0.0; p];
    let reg_mean = 2.0 * hyper.reg / n as f64;
    let max_sq = (0..n)
        .map(|i| 1.0 + data.row(i).iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / (0.25 * max_sq + reg_mean);

    let mut residual = vec![0.0; n];
    let mut seen = vec![false; n];
    let mut n_seen = 0usize;
    let mut sum = vec![0.0; p];
    let mut order: Vec<usize> = (0..n).collect();

    let (l0, mut g) = loss_and_gradient(&params, data, y, hyper.reg);
    let mut trace = vec![l0];
    let mut iterations = 0;
    while norm(&g) >= hyper.tol && iterations < hyper.max_iter {
        iterations += 1;
        order.shuffle(rng);
        for &i in &order {
            let x = data.row(i);
            let r = sigmoid(z_of(&params, x)) - y[i] as f64;
            let delta = r - residual[i];
            residual[i] = r;
            if !seen[i] {
                seen[i] = true;
                n_seen += 1;
            }
            sum[0] += delta;
            for (s, &xj) in sum[1..].iter_mut().zip(x) {
                *s += delta * xj;
            }
            let inv = 1.0 / n_seen as f64;
            params[0] -= step * sum[0] * inv;
            for j in 1..p {
                params[j] -= step * (sum[j] * inv + reg_mean * params[j]);
            }
        }
        let (l, gg) = loss_and_gradient(&params, data, y, hyper.reg);
        g = gg;
        trace.push(l);
    }
    Fit {
        converged: norm(&g) < hyper.tol,
        params,
        iterations,
        trace,
    }
}

/// Fit by the configured solver. Reaching `max_iter` leaves
/// `converged == false` but still returns a usable model.
pub fn fit_lr(train: &Dataset, hyper: LrHyper, rng: &mut RngStream) -> Result<LrModel, ModelError> {
    let (neg, pos) = train.class_counts();
    if train.row_count() == 0 {
        return Err(ModelError::EmptyDataset);
    }
    if neg == 0 || pos == 0 {
        return Err(ModelError::SingleClass);
    }
    if !(hyper.reg > 0.0) || hyper.max_iter == 0 {
        return Err(ModelError::Fit(format!(
            "invalid logistic regression settings: reg = {}, max_iter = {}",
            hyper.reg, hyper.max_iter
        )));
    }
    let m = train.to_matrix();
    let y = train.labels();
    let fit = match hyper.solver {
        Solver::Newton => fit_newton(&m, y, &hyper),
        Solver::Gradient => fit_gradient(&m, y, &hyper),
        Solver::Sag => fit_sag(&m, y, &hyper, rng),
    };
    if !fit.converged {
        log::warn!(
            "logistic regression ({:?}, reg = {}) stopped after {} iterations without converging",
            hyper.solver,
            hyper.reg,
            fit.iterations
        );
    }
    let (final_loss, g) = loss_and_gradient(&fit.params, &m, y, hyper.reg);
    Ok(LrModel {
        intercept: fit.params[0],
        coefficients: fit.params[1..].to_vec(),
        solver: hyper.solver,
        reg: hyper.reg,
        converged: fit.converged,
        iterations: fit.iterations,
        final_loss,
        gradient_norm: norm(&g),
        loss_trace: fit.trace,
    })
}

impl Learner for LrHyper {
    fn fit(&self, train: &Dataset, rng: &mut RngStream) -> Result<Box<dyn Classifier>, ModelError> {
        Ok(Box::new(fit_lr(train, *self, rng)?))
    }
}
