//! Gaussian naive Bayes evaluated in log space.

use serde::{Deserialize, Serialize};

use crate::model::{
    check_dim, Classifier, Dataset, Label, Learner, ModelError, RngStream, HALF_EXCLUSIVE,
};

/// Relative variance floor: `eps = VAR_FLOOR * (largest feature variance)`.
pub const VAR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    /// `[P(no stroke), P(stroke)]`.
    pub priors: [f64; 2],
    /// Per class, per feature.
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
    pub epsilon: f64,
}

fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Priors are class frequencies; means and (maximum-likelihood) variances
/// per class and feature, floored at `epsilon`.
pub fn fit_nb(train: &Dataset) -> Result<NbModel, ModelError> {
    let (neg, pos) = train.class_counts();
    if train.row_count() == 0 {
        return Err(ModelError::EmptyDataset);
    }
    if neg == 0 || pos == 0 {
        return Err(ModelError::SingleClass);
    }
    let labels = train.labels();
    let largest = train
        .columns()
        .iter()
        .map(|c| mean_var(c.values.iter().copied()).1)
        .fold(0.0, f64::max);
    let epsilon = if largest > 0.0 { VAR_FLOOR * largest } else { VAR_FLOOR };

    let mut means = [Vec::new(), Vec::new()];
    let mut variances = [Vec::new(), Vec::new()];
    for col in train.columns() {
        for class in 0..2u8 {
            let vals = col
                .values
                .iter()
                .zip(labels)
                .filter(move |(_, &l)| l == class)
                .map(|(&v, _)| v);
            let (m, v) = mean_var(vals);
            means[class as usize].push(m);
            variances[class as usize].push(v.max(epsilon));
        }
    }
    let n = train.row_count() as f64;
    Ok(NbModel {
        priors: [neg as f64 / n, pos as f64 / n],
        means,
        variances,
        epsilon,
    })
}

impl NbModel {
    pub fn n_features(&self) -> usize {
        self.means[0].len()
    }

    /// `ln P(s) + sum_j ln P(x_j | s)` for both classes, without the shared
    /// evidence term.
    pub fn joint_log_likelihood(&self, x: &[f64]) -> Result<[f64; 2], ModelError> {
        check_dim(x, self.n_features())?;
        let mut out = [0.0; 2];
        for (c, slot) in out.iter_mut().enumerate() {
            *slot = self.priors[c].ln()
                + x.iter()
                    .zip(&self.means[c])
                    .zip(&self.variances[c])
                    .map(|((&v, &m), &var)| {
                        -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (v - m) * (v - m) / (2.0 * var)
                    })
                    .sum::<f64>();
        }
        Ok(out)
    }

    /// Normalized `[P(no stroke | x), P(stroke | x)]`.
    pub fn class_posteriors(&self, x: &[f64]) -> Result<[f64; 2], ModelError> {
        let jll = self.joint_log_likelihood(x)?;
        let top = jll[0].max(jll[1]);
        let e = [(jll[0] - top).exp(), (jll[1] - top).exp()];
        let z = e[0] + e[1];
        Ok([e[0] / z, e[1] / z])
    }

    pub fn posterior(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok(self.class_posteriors(x)?[1])
    }
}

/// Stroke when its posterior exceeds one half; an exact tie is no stroke.
pub fn predict_nb(model: &NbModel, x: &[f64]) -> Result<Label, ModelError> {
    model.predict(x)
}

impl Classifier for NbModel {
    fn n_features(&self) -> usize {
        NbModel::n_features(self)
    }

    fn score(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.posterior(x)
    }

    fn decision_threshold(&self) -> f64 {
        HALF_EXCLUSIVE
    }
}

/// Marker learner for naive Bayes, which has no hyperparameters to tune.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NbHyper;

impl Learner for NbHyper {
    fn fit(&self, train: &Dataset, _rng: &mut RngStream) -> Result<Box<dyn Classifier>, ModelError> {
        Ok(Box::new(fit_nb(train)?))
    }
}
