//! Column dropping, missing-row removal, label encoding, min-max scaling and
//! the feature/label correlation report.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{self, ColumnRole, MissingProfile, RawTable, Schema};
use crate::model::{Column, ColumnKind, Dataset, ModelError};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("row {row}, column `{column}` is still missing")]
    MissingCell { row: usize, column: String },
    #[error("row {row}, column `{column}`: `{value}` is not numeric")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("correlation needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn drop_columns(table: &RawTable, names: &[&str]) -> Result<RawTable, PreprocessError> {
    let mut drop = BTreeSet::new();
    for name in names {
        let idx = table
            .column_index(name)
            .ok_or_else(|| PreprocessError::UnknownColumn(name.to_string()))?;
        drop.insert(idx);
    }
    let keep = |row: &[String]| -> Vec<String> {
        row.iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, c)| c.clone())
            .collect()
    };
    Ok(RawTable {
        header: keep(&table.header),
        rows: table.rows.iter().map(|r| keep(r)).collect(),
        missing_tokens: table.missing_tokens.clone(),
    })
}

/// Remove every row holding at least one missing cell. Returns the filtered
/// table and the number of rows dropped.
pub fn drop_missing_rows(table: &RawTable) -> (RawTable, usize) {
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .filter(|r| !r.iter().any(|c| table.is_missing(c)))
        .cloned()
        .collect();
    let dropped = table.rows.len() - rows.len();
    (
        RawTable {
            header: table.header.clone(),
            rows,
            missing_tokens: table.missing_tokens.clone(),
        },
        dropped,
    )
}

/// Category list of one encoded column; a category's code is its index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnEncoding {
    pub column: String,
    pub categories: Vec<String>,
}

impl ColumnEncoding {
    /// Codes are assigned in byte-wise lexicographic order of the category
    /// strings.
    pub fn fit<'a, I: IntoIterator<Item = &'a str>>(column: &str, cells: I) -> Self {
        let set: BTreeSet<&str> = cells.into_iter().collect();
        Self {
            column: column.to_string(),
            categories: set.into_iter().map(str::to_string).collect(),
        }
    }

    pub fn encode(&self, category: &str) -> Option<usize> {
        self.categories.binary_search_by(|c| c.as_str().cmp(category)).ok()
    }

    pub fn decode(&self, code: usize) -> Option<&str> {
        self.categories.get(code).map(String::as_str)
    }

    /// Number of distinct categories.
    pub fn cardinality(&self) -> usize {
        self.categories.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EncodingMap {
    pub columns: Vec<ColumnEncoding>,
}

impl EncodingMap {
    pub fn get(&self, column: &str) -> Option<&ColumnEncoding> {
        self.columns.iter().find(|c| c.column == column)
    }
}

/// Turn a missing-free table into a numeric dataset. Id columns and columns
/// the schema does not know are left out; categorical columns are label
/// encoded, the label column is mapped stroke -> 1, no stroke -> 0.
pub fn label_encode(
    table: &RawTable,
    schema: &Schema,
) -> Result<(Dataset, EncodingMap), PreprocessError> {
    let label_name = schema.label_column();
    let label_idx = table
        .column_index(label_name)
        .ok_or_else(|| PreprocessError::UnknownColumn(label_name.to_string()))?;
    let labels = table
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            ingest::parse_label(&row[label_idx]).ok_or_else(|| PreprocessError::NonNumeric {
                row: r + 1,
                column: label_name.to_string(),
                value: row[label_idx].clone(),
            })
        })
        .collect::<Result<Vec<u8>, _>>()?;

    let mut columns = Vec::new();
    let mut encoding = EncodingMap::default();
    for (c, name) in table.header.iter().enumerate() {
        let kind = match schema.role_of(name) {
            Some(ColumnRole::Continuous) => ColumnKind::Continuous,
            Some(ColumnRole::Categorical) => ColumnKind::CategoricalEncoded,
            Some(ColumnRole::Binary) => ColumnKind::Binary,
            _ => continue,
        };
        if let Some(r) = table.rows.iter().position(|row| table.is_missing(&row[c])) {
            return Err(PreprocessError::MissingCell {
                row: r + 1,
                column: name.clone(),
            });
        }
        let values = if kind == ColumnKind::CategoricalEncoded {
            let enc = ColumnEncoding::fit(name, table.rows.iter().map(|r| r[c].as_str()));
            let values = table
                .rows
                .iter()
                .map(|r| enc.encode(&r[c]).expect("category seen during fit") as f64)
                .collect();
            encoding.columns.push(enc);
            values
        } else {
            table
                .rows
                .iter()
                .enumerate()
                .map(|(r, row)| {
                    ingest::parse_number(&row[c]).ok_or_else(|| PreprocessError::NonNumeric {
                        row: r + 1,
                        column: name.clone(),
                        value: row[c].clone(),
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?
        };
        columns.push(Column {
            name: name.clone(),
            kind,
            values,
        });
    }
    Ok((Dataset::new(columns, labels)?, encoding))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub column: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub columns: Vec<ColumnRange>,
}

impl NormalizationParams {
    /// Apply the stored ranges. Columns absent from `data` are ignored;
    /// values outside the fitted range map outside [0, 1].
    pub fn apply(&self, data: &Dataset) -> Dataset {
        let mut out = data.clone();
        for range in &self.columns {
            let Some(j) = data.columns().iter().position(|c| c.name == range.column) else {
                continue;
            };
            let span = range.max - range.min;
            let values = data.columns()[j]
                .values
                .iter()
                .map(|&v| if span > 0.0 { (v - range.min) / span } else { 0.0 })
                .collect();
            out.replace_column_values(j, values);
        }
        out
    }
}

/// Scale the named columns to [0, 1] with `(x - min) / (max - min)`; a
/// constant column maps to 0.
pub fn min_max_normalize(
    data: &Dataset,
    columns: &[&str],
) -> Result<(Dataset, NormalizationParams), PreprocessError> {
    let mut params = NormalizationParams::default();
    for name in columns {
        let col = data
            .column(name)
            .ok_or_else(|| PreprocessError::UnknownColumn(name.to_string()))?;
        let (min, max) = col
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let (min, max) = if col.values.is_empty() { (0.0, 0.0) } else { (min, max) };
        params.columns.push(ColumnRange {
            column: name.to_string(),
            min,
            max,
        });
    }
    Ok((params.apply(data), params))
}

/// Pearson's r between each feature and the label. A constant feature (or a
/// constant label) yields 0.
pub fn pearson_correlation(data: &Dataset) -> Result<Vec<(String, f64)>, PreprocessError> {
    let n = data.row_count();
    if n < 2 {
        return Err(PreprocessError::TooFewRows(n));
    }
    let y: Vec<f64> = data.labels().iter().map(|&l| l as f64).collect();
    Ok(data
        .columns()
        .iter()
        .map(|c| (c.name.clone(), pearson(&c.values, &y)))
        .collect())
}

pub(crate) fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Options for [`preprocess`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub drop: Vec<String>,
    pub normalize: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            drop: vec!["id".into()],
            normalize: false,
        }
    }
}

/// Everything the preprocessing stage produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preprocessed {
    #[serde(skip)]
    pub dataset: Option<Dataset>,
    pub input_rows: usize,
    pub dropped_columns: Vec<String>,
    pub dropped_rows: usize,
    pub output_rows: usize,
    pub stroke: usize,
    pub no_stroke: usize,
    pub missing_profile: MissingProfile,
    pub encoding: EncodingMap,
    pub normalization: Option<NormalizationParams>,
    /// `(feature, r)` in column order.
    pub correlation: Vec<(String, f64)>,
}

impl Preprocessed {
    pub fn dataset(&self) -> &Dataset {
        self.dataset.as_ref().expect("dataset present after preprocessing")
    }
}

/// Drop configured columns (matched case-insensitively), drop rows with any
/// missing cell, encode, optionally normalize continuous columns, and
/// compute correlations on the encoded matrix.
pub fn preprocess(
    table: &RawTable,
    schema: &Schema,
    opts: &PreprocessOptions,
) -> Result<Preprocessed, PreprocessError> {
    let missing_profile = ingest::missing_profile(table);
    let mut dropped_columns = Vec::new();
    for want in &opts.drop {
        let name = table
            .header
            .iter()
            .find(|h| h.trim().eq_ignore_ascii_case(want))
            .ok_or_else(|| PreprocessError::UnknownColumn(want.clone()))?;
        dropped_columns.push(name.clone());
    }
    let names: Vec<&str> = dropped_columns.iter().map(String::as_str).collect();
    let table_kept = drop_columns(table, &names)?;
    let (complete, dropped_rows) = drop_missing_rows(&table_kept);
    let (mut dataset, encoding) = label_encode(&complete, schema)?;
    let correlation = pearson_correlation(&dataset)?;
    let normalization = if opts.normalize {
        let cont: Vec<String> = dataset
            .columns()
            .iter()
            .filter(|c| c.kind == ColumnKind::Continuous)
            .map(|c| c.name.clone())
            .collect();
        let refs: Vec<&str> = cont.iter().map(String::as_str).collect();
        let (scaled, params) = min_max_normalize(&dataset, &refs)?;
        dataset = scaled;
        Some(params)
    } else {
        None
    };
    let (no_stroke, stroke) = dataset.class_counts();
    Ok(Preprocessed {
        input_rows: table.row_count(),
        dropped_columns,
        dropped_rows,
        output_rows: dataset.row_count(),
        stroke,
        no_stroke,
        missing_profile,
        encoding,
        normalization,
        correlation,
        dataset: Some(dataset),
    })
}

/// Write a dataset as CSV: feature columns, then `stroke`. Values use the
/// shortest representation that parses back to the identical f64.
pub fn write_dataset_csv<W: std::io::Write>(data: &Dataset, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = data.feature_names();
    header.push("stroke".into());
    w.write_record(&header)?;
    for i in 0..data.row_count() {
        let mut rec: Vec<String> = data.columns().iter().map(|c| c.values[i].to_string()).collect();
        rec.push(data.labels()[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a dataset written by [`write_dataset_csv`]; kinds come from `kinds`
/// (by column name), defaulting to continuous.
pub fn read_dataset_csv<R: std::io::Read>(
    input: R,
    kinds: &[(String, ColumnKind)],
) -> Result<Dataset, PreprocessError> {
    let table = ingest::parse_csv(input, ingest::MissingTokens::from_tokens(Vec::<String>::new()))?;
    let label_idx = table
        .header
        .len()
        .checked_sub(1)
        .ok_or_else(|| PreprocessError::UnknownColumn("stroke".into()))?;
    let mut columns = Vec::new();
    for (c, name) in table.header[..label_idx].iter().enumerate() {
        let kind = kinds
            .iter()
            .find(|(n, _)| n == name)
            .map_or(ColumnKind::Continuous, |(_, k)| *k);
        let values = table
            .rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row[c].parse::<f64>().map_err(|_| PreprocessError::NonNumeric {
                    row: r + 1,
                    column: name.clone(),
                    value: row[c].clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        columns.push(Column {
            name: name.clone(),
            kind,
            values,
        });
    }
    let labels = table
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            ingest::parse_label(&row[label_idx]).ok_or_else(|| PreprocessError::NonNumeric {
                row: r + 1,
                column: table.header[label_idx].clone(),
                value: row[label_idx].clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(columns, labels)?)
}
