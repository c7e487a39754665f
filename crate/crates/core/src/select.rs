//! Stratified k-fold splitting, cross-validation and grid search scored by
//! macro-averaged F-measure.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes::{NbHyper, NbModel};
use crate::logreg::{LrHyper, LrModel, Solver};
use crate::metrics::{compute_metrics, confusion, FoldOutcome, MetricsError, Timings};
use crate::model::{Classifier, Dataset, Label, Learner, ModelError, RngStream};
use crate::smote::{self, SmoteConfig, SmoteError};
use crate::svm::{SvmHyper, SvmModel};
use crate::tree::{Criterion, DecisionTree, ForestHyper, MaxFeatures, RandomForest, TreeHyper};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("k must be at least 2, got {0}")]
    KTooSmall(usize),
    #[error("class {class} has {count} rows, fewer than k = {k}")]
    ClassTooSmall { class: u8, count: usize, k: usize },
    #[error("fold {fold}: {source}")]
    FoldFit { fold: usize, source: ModelError },
    #[error("fold {fold}: oversampling failed: {source}")]
    FoldSmote { fold: usize, source: SmoteError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("grid is empty")]
    EmptyGrid,
    #[error("every grid combination failed; first error: {0}")]
    AllFailed(String),
    #[error("sample fraction must be in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("unknown algorithm `{0}` (expected dt, rf, svm, nb or lr)")]
    UnknownAlgorithm(String),
}

/// Held-out row indices per fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Rows not held out by `fold`.
    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != fold)
            .flat_map(|(_, r)| r.iter().copied())
            .collect();
        rows.sort_unstable();
        rows
    }
}

/// Shuffle each class, then deal rows round-robin to the folds: no-stroke
/// rows first, stroke rows continuing from the fold where they stopped. Fold
/// sizes differ by at most one and per-fold class counts by at most one.
pub fn stratified_kfold(labels: &[u8], k: usize, rng: &mut RngStream) -> Result<FoldPlan, SelectError> {
    if k < 2 {
        return Err(SelectError::KTooSmall(k));
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if rows.len() < k {
            return Err(SelectError::ClassTooSmall {
                class,
                count: rows.len(),
                k,
            });
        }
        rows.shuffle(rng);
        for r in rows {
            folds[next % k].push(r);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { k, folds })
}

/// Stratified subsample keeping `round(frac * count)` rows of each class
/// (at least one), in original row order.
pub fn stratified_subsample(data: &Dataset, frac: f64, rng: &mut RngStream) -> Result<Dataset, SelectError> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(SelectError::BadFraction(frac));
    }
    if frac == 1.0 {
        return Ok(data.clone());
    }
    let mut keep = Vec::new();
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..data.row_count())
            .filter(|&i| data.labels()[i] == class)
            .collect();
        if rows.is_empty() {
            continue;
        }
        rows.shuffle(rng);
        let take = ((rows.len() as f64 * frac).round() as usize).max(1);
        keep.extend_from_slice(&rows[..take]);
    }
    keep.sort_unstable();
    Ok(data.subset(&keep))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dt,
    Rf,
    Svm,
    Nb,
    Lr,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Dt,
        Algorithm::Rf,
        Algorithm::Svm,
        Algorithm::Nb,
        Algorithm::Lr,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Algorithm::Dt => "dt",
            Algorithm::Rf => "rf",
            Algorithm::Svm => "svm",
            Algorithm::Nb => "nb",
            Algorithm::Lr => "lr",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dt => "Decision Tree",
            Algorithm::Rf => "Random Forest",
            Algorithm::Svm => "Support Vector Machine",
            Algorithm::Nb => "Naive Bayes",
            Algorithm::Lr => "Logistic Regression",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Algorithm {
    type Err = SelectError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| SelectError::UnknownAlgorithm(s.to_string()))
    }
}

/// One hyperparameter setting of one learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Hyper {
    Dt(TreeHyper),
    Rf(ForestHyper),
    Svm(SvmHyper),
    Nb(NbHyper),
    Lr(LrHyper),
}

impl Hyper {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Hyper::Dt(_) => Algorithm::Dt,
            Hyper::Rf(_) => Algorithm::Rf,
            Hyper::Svm(_) => Algorithm::Svm,
            Hyper::Nb(_) => Algorithm::Nb,
            Hyper::Lr(_) => Algorithm::Lr,
        }
    }

    pub fn fit_model(&self, train: &Dataset, rng: &mut RngStream) -> Result<TrainedModel, ModelError> {
        Ok(match self {
            Hyper::Dt(h) => TrainedModel::Dt(crate::tree::fit_tree(train, *h, rng)?),
            Hyper::Rf(h) => TrainedModel::Rf(crate::tree::fit_forest(train, *h, rng)?),
            Hyper::Svm(h) => TrainedModel::Svm(crate::svm::fit_svm(train, *h, rng)?),
            Hyper::Nb(_) => TrainedModel::Nb(crate::bayes::fit_nb(train)?),
            Hyper::Lr(h) => TrainedModel::Lr(crate::logreg::fit_lr(train, *h, rng)?),
        })
    }
}

impl Learner for Hyper {
    fn fit(&self, train: &Dataset, rng: &mut RngStream) -> Result<Box<dyn Classifier>, ModelError> {
        Ok(Box::new(self.fit_model(train, rng)?))
    }
}

/// Any of the five fitted learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", content = "model", rename_all = "snake_case")]
pub enum TrainedModel {
    Dt(DecisionTree),
    Rf(RandomForest),
    Svm(SvmModel),
    Nb(NbModel),
    Lr(LrModel),
}

impl TrainedModel {
    fn inner(&self) -> &dyn Classifier {
        match self {
            TrainedModel::Dt(m) => m,
            TrainedModel::Rf(m) => m,
            TrainedModel::Svm(m) => m,
            TrainedModel::Nb(m) => m,
            TrainedModel::Lr(m) => m,
        }
    }
}

impl Classifier for TrainedModel {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn score(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.inner().score(x)
    }

    fn decision_threshold(&self) -> f64 {
        self.inner().decision_threshold()
    }
}

/// How Table II style "regularization parameter" values map onto the
/// logistic-regression penalty weight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegConvention {
    /// The grid value is the penalty weight itself.
    #[default]
    Lambda,
    /// The grid value is an inverse strength `C`; the weight is `1 / (2 C)`.
    Inverse,
}

impl RegConvention {
    pub fn penalty(self, grid_value: f64) -> f64 {
        match self {
            RegConvention::Lambda => grid_value,
            RegConvention::Inverse => 1.0 / (2.0 * grid_value),
        }
    }
}

pub const RF_ESTIMATORS: [usize; 14] = [10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 200, 300, 400, 500];
pub const CRITERIA: [Criterion; 2] = [Criterion::Gini, Criterion::Entropy];
pub const MAX_FEATURES: [MaxFeatures; 4] = [
    MaxFeatures::None,
    MaxFeatures::Auto,
    MaxFeatures::Sqrt,
    MaxFeatures::Log2,
];
pub const SVM_C: [f64; 6] = [0.1, 0.25, 1.0, 4.0, 16.0, 64.0];
pub const SVM_GAMMA: [f64; 5] = [1.0 / 64.0, 1.0 / 16.0, 0.25, 1.0, 4.0];
pub const LR_REG: [f64; 7] = [1.0 / 64.0, 1.0 / 16.0, 0.25, 1.0, 4.0, 16.0, 64.0];
pub const LR_SOLVERS: [Solver; 3] = [Solver::Newton, Solver::Gradient, Solver::Sag];

/// Note recorded in reports about the logistic-regression grid.
pub const LR_GRID_NOTE: &str = "logistic regression solvers are newton, gradient and sag (3 strategies x 7 penalties = 21 combinations, not the 5 x 7 = 35 of the original toolkit solver list)";

/// Hyperparameter grid per algorithm, enumerated in table row order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub reg_convention: RegConvention,
}

impl GridSpec {
    pub fn combinations(&self, algorithm: Algorithm) -> Vec<Hyper> {
        match algorithm {
            Algorithm::Dt => CRITERIA
                .iter()
                .flat_map(|&criterion| {
                    MAX_FEATURES
                        .iter()
                        .map(move |&max_features| Hyper::Dt(TreeHyper { criterion, max_features }))
                })
                .collect(),
            Algorithm::Rf => RF_ESTIMATORS
                .iter()
                .flat_map(|&n_estimators| {
                    CRITERIA.iter().flat_map(move |&criterion| {
                        MAX_FEATURES.iter().map(move |&max_features| {
                            Hyper::Rf(ForestHyper {
                                n_estimators,
                                criterion,
                                max_features,
                                bootstrap: true,
                            })
                        })
                    })
                })
                .collect(),
            Algorithm::Svm => SVM_C
                .iter()
                .flat_map(|&c| SVM_GAMMA.iter().map(move |&g| Hyper::Svm(SvmHyper::new(c, g))))
                .collect(),
            Algorithm::Nb => vec![Hyper::Nb(NbHyper)],
            Algorithm::Lr => {
                let conv = self.reg_convention;
                LR_REG
                    .iter()
                    .flat_map(|&r| {
                        LR_SOLVERS
                            .iter()
                            .map(move |&s| Hyper::Lr(LrHyper::new(conv.penalty(r), s)))
                    })
                    .collect()
            }
        }
    }
}

/// Cross-validation options.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    /// Oversample each training fold (held-out folds stay untouched).
    pub smote_in_fold: Option<SmoteConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<FoldOutcome>,
    /// Out-of-fold score per dataset row.
    pub oof_scores: Vec<f64>,
}

impl CvResult {
    pub fn mean_macro_f(&self) -> Result<f64, MetricsError> {
        let mut total = 0.0;
        for f in &self.folds {
            total += compute_metrics(&f.confusion)?.f_macro;
        }
        Ok(total / self.folds.len() as f64)
    }
}

/// Fit on all folds but one, score the held-out fold, for every fold. Fold
/// `i` draws from the child stream `fold<i>`.
pub fn cross_validate(
    learner: &dyn Learner,
    data: &Dataset,
    plan: &FoldPlan,
    rng: &RngStream,
    opts: &CvOptions,
) -> Result<CvResult, SelectError> {
    let labels: Vec<Label> = (0..data.row_count()).map(|i| data.label(i)).collect();
    let folds = (0..plan.k)
        .into_par_iter()
        .map(|fold| -> Result<FoldOutcome, SelectError> {
            let mut stream = rng.child(&format!("fold{fold}"));
            let fit_start = Instant::now();
            let mut train = data.subset(&plan.train_rows(fold));
            if let Some(cfg) = &opts.smote_in_fold {
                let mut s = stream.child("smote");
                train = smote::oversample(&train, cfg, &mut s)
                    .map_err(|source| SelectError::FoldSmote { fold, source })?;
            }
            let model = learner
                .fit(&train, &mut stream)
                .map_err(|source| SelectError::FoldFit { fold, source })?;
            let fit_secs = fit_start.elapsed().as_secs_f64();

            let val_start = Instant::now();
            let held = &plan.folds[fold];
            let mut scores = Vec::with_capacity(held.len());
            let mut preds = Vec::with_capacity(held.len());
            let threshold = model.decision_threshold();
            for &r in held {
                let s = model
                    .score(data.row(r).as_slice())
                    .map_err(|source| SelectError::FoldFit { fold, source })?;
                scores.push(s);
                preds.push(if s >= threshold { Label::Stroke } else { Label::NoStroke });
            }
            let fold_labels: Vec<Label> = held.iter().map(|&r| labels[r]).collect();
            let cm = confusion(&preds, &fold_labels)?;
            Ok(FoldOutcome {
                fold,
                confusion: cm,
                rows: held.clone(),
                scores,
                labels: fold_labels,
                timings: Timings {
                    tuning_secs: 0.0,
                    fit_secs,
                    validate_secs: val_start.elapsed().as_secs_f64(),
                },
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut oof_scores = vec![f64::NAN; data.row_count()];
    for f in &folds {
        for (i, &r) in f.rows.iter().enumerate() {
            oof_scores[r] = f.scores[i];
        }
    }
    Ok(CvResult {
        folds,
        oof_scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub hyper: Hyper,
    pub mean_f_macro: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: Hyper,
    pub best_index: usize,
    pub best_score: f64,
    pub entries: Vec<GridEntry>,
    pub tuning_k: usize,
    pub tuning_secs: f64,
}

/// Score every combination by mean fold macro-F over one shared
/// `tuning_k`-fold plan and return the first best. Combination `c` draws
/// from the child stream `combo<c>`.
pub fn grid_search(
    grid: &[Hyper],
    data: &Dataset,
    tuning_k: usize,
    rng: &RngStream,
    opts: &CvOptions,
) -> Result<GridResult, SelectError> {
    if grid.is_empty() {
        return Err(SelectError::EmptyGrid);
    }
    let start = Instant::now();
    let plan = stratified_kfold(data.labels(), tuning_k, &mut rng.child("folds"))?;
    let entries: Vec<GridEntry> = grid
        .par_iter()
        .enumerate()
        .map(|(c, hyper)| {
            let stream = rng.child(&format!("combo{c}"));
            let outcome = cross_validate(hyper, data, &plan, &stream, opts)
                .and_then(|cv| cv.mean_macro_f().map_err(SelectError::from));
            match outcome {
                Ok(score) => GridEntry {
                    hyper: *hyper,
                    mean_f_macro: Some(score),
                    error: None,
                },
                Err(e) => GridEntry {
                    hyper: *hyper,
                    mean_f_macro: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in entries.iter().enumerate() {
        if let Some(s) = e.mean_f_macro {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    let Some((best_index, best_score)) = best else {
        return Err(SelectError::AllFailed(
            entries[0].error.clone().unwrap_or_default(),
        ));
    };
    Ok(GridResult {
        best: entries[best_index].hyper,
        best_index,
        best_score,
        entries,
        tuning_k,
        tuning_secs: start.elapsed().as_secs_f64(),
    })
}
