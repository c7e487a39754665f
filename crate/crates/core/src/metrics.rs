//! Confusion matrices, class-specific and macro-averaged precision, recall
//! and F-measure, ROC curves, AUC and fold pooling.
//!
//! Stroke (label 1) is the positive class throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Label;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("predictions ({predictions}) and labels ({labels}) differ in length")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("ROC needs both classes among the labels")]
    SingleClass,
    #[error("AUC needs at least 2 curve points, got {0}")]
    TooFewPoints(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Matrix with the roles of the two classes exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

pub fn confusion(predictions: &[Label], labels: &[Label]) -> Result<ConfusionMatrix, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (Label::Stroke, Label::Stroke) => cm.tp += 1,
            (Label::NoStroke, Label::NoStroke) => cm.tn += 1,
            (Label::Stroke, Label::NoStroke) => cm.fp += 1,
            (Label::NoStroke, Label::Stroke) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Scalar metrics of one confusion matrix. Ratios with a zero denominator
/// are reported as 0 and their names listed in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarMetrics {
    pub accuracy: f64,
    pub p_stroke: f64,
    pub p_no_stroke: f64,
    pub p_macro: f64,
    pub r_stroke: f64,
    pub r_no_stroke: f64,
    pub r_macro: f64,
    pub f_stroke: f64,
    pub f_no_stroke: f64,
    /// Harmonic mean of `p_macro` and `r_macro`, not the mean of the two
    /// class F-measures.
    pub f_macro: f64,
    pub undefined: Vec<String>,
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<ScalarMetrics, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let mut undefined = Vec::new();
    let mut ratio = |name: &str, num: f64, den: f64| {
        if den == 0.0 {
            undefined.push(name.to_string());
            0.0
        } else {
            num / den
        }
    };
    let (tp, tn, fp, fn_) = (cm.tp as f64, cm.tn as f64, cm.fp as f64, cm.fn_ as f64);
    let accuracy = (tp + tn) / total as f64;
    let p_stroke = ratio("p_stroke", tp, tp + fp);
    let p_no_stroke = ratio("p_no_stroke", tn, tn + fn_);
    let r_stroke = ratio("r_stroke", tp, tp + fn_);
    let r_no_stroke = ratio("r_no_stroke", tn, tn + fp);
    let p_macro = (p_stroke + p_no_stroke) / 2.0;
    let r_macro = (r_stroke + r_no_stroke) / 2.0;
    let f_stroke = ratio("f_stroke", 2.0 * p_stroke * r_stroke, p_stroke + r_stroke);
    let f_no_stroke = ratio(
        "f_no_stroke",
        2.0 * p_no_stroke * r_no_stroke,
        p_no_stroke + r_no_stroke,
    );
    let f_macro = ratio("f_macro", 2.0 * p_macro * r_macro, p_macro + r_macro);
    Ok(ScalarMetrics {
        accuracy,
        p_stroke,
        p_no_stroke,
        p_macro,
        r_stroke,
        r_no_stroke,
        r_macro,
        f_stroke,
        f_no_stroke,
        f_macro,
        undefined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Score threshold producing this point (`+inf` for the origin, stored
    /// as `null` in JSON).
    #[serde(with = "infinite_as_null")]
    pub threshold: f64,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// ROC points for thresholds swept over the distinct scores in descending
/// order. Tied scores form one point; the curve starts at (0, 0) and ends at
/// (1, 1).
pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Result<Vec<RocPoint>, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: scores.len(),
            labels: labels.len(),
        });
    }
    let pos = labels.iter().filter(|l| l.is_stroke()).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]].is_stroke() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: s,
        });
    }
    Ok(points)
}

/// Trapezoidal area under a ROC curve.
pub fn auc(points: &[RocPoint]) -> Result<f64, MetricsError> {
    if points.len() < 2 {
        return Err(MetricsError::TooFewPoints(points.len()));
    }
    let area = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum::<f64>();
    Ok(area.clamp(0.0, 1.0))
}

/// Wall-clock seconds spent per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub tuning_secs: f64,
    pub fit_secs: f64,
    pub validate_secs: f64,
}

impl std::ops::Add for Timings {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            tuning_secs: self.tuning_secs + o.tuning_secs,
            fit_secs: self.fit_secs + o.fit_secs,
            validate_secs: self.validate_secs + o.validate_secs,
        }
    }
}

/// Held-out results of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub confusion: ConfusionMatrix,
    /// Rows of the evaluated dataset held out in this fold.
    pub rows: Vec<usize>,
    pub scores: Vec<f64>,
    pub labels: Vec<Label>,
    pub timings: Timings,
}

/// Full metrics block: scalars, ROC and AUC, and timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    #[serde(flatten)]
    pub scalars: ScalarMetrics,
    pub roc: Vec<RocPoint>,
    pub auc: Option<f64>,
    pub timings: Timings,
}

impl MetricsReport {
    pub fn from_parts(
        confusion: ConfusionMatrix,
        scores: &[f64],
        labels: &[Label],
        timings: Timings,
    ) -> Result<Self, MetricsError> {
        let scalars = compute_metrics(&confusion)?;
        // A single-class fold has no ROC; the scalars still stand.
        let roc = roc_curve(scores, labels).unwrap_or_default();
        let auc = if roc.len() >= 2 { Some(auc(&roc)?) } else { None };
        Ok(Self {
            confusion,
            scalars,
            roc,
            auc,
            timings,
        })
    }
}

/// Pooled view over folds: matrices summed, out-of-fold scores concatenated
/// into one ROC, timings summed.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub confusion: ConfusionMatrix,
    pub roc: Vec<RocPoint>,
    pub auc: f64,
    pub timings: Timings,
}

pub fn pool_folds(folds: &[FoldOutcome]) -> Result<Pooled, MetricsError> {
    let confusion = folds.iter().map(|f| f.confusion).sum();
    let scores: Vec<f64> = folds.iter().flat_map(|f| f.scores.iter().copied()).collect();
    let labels: Vec<Label> = folds.iter().flat_map(|f| f.labels.iter().copied()).collect();
    let roc = roc_curve(&scores, &labels)?;
    let auc = auc(&roc)?;
    let timings = folds.iter().fold(Timings::default(), |a, f| a + f.timings);
    Ok(Pooled {
        confusion,
        roc,
        auc,
        timings,
    })
}
