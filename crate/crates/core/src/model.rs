//! Shared domain types: the encoded dataset, labels, seeded random streams
//! and the uniform classifier contract implemented by every learner.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seed used when none is configured.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("random stream label must not be empty")]
    EmptyStreamLabel,
    #[error("column `{name}` has {got} values, expected {expected}")]
    ColumnLength {
        name: String,
        got: usize,
        expected: usize,
    },
    #[error("label vector has {got} values, expected {expected}")]
    LabelLength { got: usize, expected: usize },
    #[error("label value {0} is not 0 or 1")]
    InvalidLabel(f64),
    #[error("column `{0}` contains a non-finite value")]
    NonFinite(String),
    #[error("feature vector has {got} values, model expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("{0}")]
    Fit(String),
}

/// Binary class label. `Stroke` is always the positive class (1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    NoStroke,
    Stroke,
}

impl Label {
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Label::NoStroke),
            1 => Some(Label::Stroke),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Label::NoStroke => 0,
            Label::Stroke => 1,
        }
    }

    pub fn is_stroke(self) -> bool {
        self == Label::Stroke
    }
}

/// How a feature column was produced from the raw table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    CategoricalEncoded,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<f64>,
}

/// Column-oriented table of numeric features with a binary label per row.
///
/// Rows appended by oversampling carry `synthetic == true`; every other row
/// is an original observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    columns: Vec<Column>,
    labels: Vec<u8>,
    synthetic: Vec<bool>,
}

impl Dataset {
    pub fn new(columns: Vec<Column>, labels: Vec<u8>) -> Result<Self, ModelError> {
        let synthetic = vec![false; labels.len()];
        Self::with_synthetic(columns, labels, synthetic)
    }

    pub fn with_synthetic(
        columns: Vec<Column>,
        labels: Vec<u8>,
        synthetic: Vec<bool>,
    ) -> Result<Self, ModelError> {
        let n = labels.len();
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(ModelError::InvalidLabel(bad as f64));
        }
        if synthetic.len() != n {
            return Err(ModelError::LabelLength {
                got: synthetic.len(),
                expected: n,
            });
        }
        for col in &columns {
            if col.values.len() != n {
                return Err(ModelError::ColumnLength {
                    name: col.name.clone(),
                    got: col.values.len(),
                    expected: n,
                });
            }
            if col.values.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite(col.name.clone()));
            }
        }
        Ok(Self {
            columns,
            labels,
            synthetic,
        })
    }

    /// Build a dataset from row-major feature vectors. Column names are
    /// `x0`, `x1`, ... and every column is continuous.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self, ModelError> {
        if rows.len() != labels.len() {
            return Err(ModelError::LabelLength {
                got: labels.len(),
                expected: rows.len(),
            });
        }
        let d = rows.first().map_or(0, Vec::len);
        let mut columns: Vec<Column> = (0..d)
            .map(|j| Column {
                name: format!("x{j}"),
                kind: ColumnKind::Continuous,
                values: Vec::with_capacity(rows.len()),
            })
            .collect();
        for row in rows {
            if row.len() != d {
                return Err(ModelError::DimensionMismatch {
                    got: row.len(),
                    expected: d,
                });
            }
            for (col, &v) in columns.iter_mut().zip(row) {
                col.values.push(v);
            }
        }
        Self::new(columns, labels)
    }

    pub fn row_count(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_count(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, row: usize) -> Label {
        if self.labels[row] == 1 {
            Label::Stroke
        } else {
            Label::NoStroke
        }
    }

    pub fn synthetic(&self) -> &[bool] {
        &self.synthetic
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col].values[row]
    }

    pub fn row(&self, row: usize) -> FeatureVector {
        FeatureVector(self.columns.iter().map(|c| c.values[row]).collect())
    }

    /// Row-major copy of the feature matrix.
    pub fn to_matrix(&self) -> Matrix {
        let n = self.row_count();
        let d = self.feature_count();
        let mut data = vec![0.0; n * d];
        for (j, col) in self.columns.iter().enumerate() {
            for (i, &v) in col.values.iter().enumerate() {
                data[i * d + j] = v;
            }
        }
        Matrix { data, rows: n, cols: d }
    }

    /// (no-stroke, stroke) counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (self.labels.len() - pos, pos)
    }

    /// New dataset holding the given rows in the given order (repeats allowed).
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                kind: c.kind,
                values: rows.iter().map(|&i| c.values[i]).collect(),
            })
            .collect();
        Dataset {
            columns,
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            synthetic: rows.iter().map(|&i| self.synthetic[i]).collect(),
        }
    }

    /// Append rows; used by oversampling. `rows` are feature vectors in
    /// column order.
    pub fn append_rows(
        &self,
        rows: &[Vec<f64>],
        labels: &[u8],
        synthetic: bool,
    ) -> Result<Dataset, ModelError> {
        let mut out = self.clone();
        for (row, &label) in rows.iter().zip(labels) {
            if row.len() != out.columns.len() {
                return Err(ModelError::DimensionMismatch {
                    got: row.len(),
                    expected: out.columns.len(),
                });
            }
            if label > 1 {
                return Err(ModelError::InvalidLabel(label as f64));
            }
            for (col, &v) in out.columns.iter_mut().zip(row) {
                col.values.push(v);
            }
            out.labels.push(label);
            out.synthetic.push(synthetic);
        }
        Ok(out)
    }

    pub fn replace_column_values(&mut self, col: usize, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.row_count());
        self.columns[col].values = values;
    }
}

/// Feature values of one observation, aligned with the dataset's column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Matrix {
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Deterministic random stream keyed by `(seed, label)`.
///
/// The label is hashed into the ChaCha stream id, so distinct labels under
/// the same seed yield independent sequences.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    label: String,
    rng: ChaCha20Rng,
}

pub fn derive_stream(master_seed: u64, label: &str) -> Result<RngStream, ModelError> {
    if label.is_empty() {
        return Err(ModelError::EmptyStreamLabel);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(fnv1a64(label.as_bytes()));
    Ok(RngStream {
        seed: master_seed,
        label: label.to_owned(),
        rng,
    })
}

impl RngStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Child stream `"<label>/<sub>"`; independent of how much of `self`
    /// has been consumed.
    pub fn child(&self, sub: &str) -> RngStream {
        derive_stream(self.seed, &format!("{}/{}", self.label, sub))
            .expect("child label is never empty")
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// A fitted binary classifier.
///
/// `score` is a confidence oriented toward the stroke class; `predict`
/// returns `Stroke` exactly when `score >= decision_threshold()`.
pub trait Classifier: Send + Sync {
    fn n_features(&self) -> usize;

    fn score(&self, x: &[f64]) -> Result<f64, ModelError>;

    fn decision_threshold(&self) -> f64;

    fn predict(&self, x: &[f64]) -> Result<Label, ModelError> {
        let s = self.score(x)?;
        Ok(if s >= self.decision_threshold() {
            Label::Stroke
        } else {
            Label::NoStroke
        })
    }
}

/// Something that can be trained into a [`Classifier`].
pub trait Learner: Sync {
    fn fit(&self, train: &Dataset, rng: &mut RngStream) -> Result<Box<dyn Classifier>, ModelError>;
}

pub(crate) fn check_dim(x: &[f64], expected: usize) -> Result<(), ModelError> {
    if x.len() != expected {
        return Err(ModelError::DimensionMismatch {
            got: x.len(),
            expected,
        });
    }
    Ok(())
}

/// Smallest representable value strictly above 0.5: scores equal to one half
/// fall on the no-stroke side.
pub const HALF_EXCLUSIVE: f64 = 0.500_000_000_000_000_1;
