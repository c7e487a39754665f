//! CSV ingestion, schema validation and missing-cell profiling.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0} is empty (a header row is required)")]
    EmptyFile(PathBuf),
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("table has no data rows")]
    EmptyTable,
    #[error("missing label column `{0}`")]
    MissingLabel(String),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: `{value}` is not numeric")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: `{value}` is not a binary 0/1 value")]
    NotBinary {
        row: usize,
        column: String,
        value: String,
    },
}

/// Strings that mark a cell as missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingTokens(BTreeSet<String>);

impl Default for MissingTokens {
    fn default() -> Self {
        Self(["", "N/A", "NA"].iter().map(|s| s.to_string()).collect())
    }
}

impl MissingTokens {
    /// Default tokens, plus the literal `Unknown` when `unknown_is_missing`.
    pub fn new(unknown_is_missing: bool) -> Self {
        let mut t = Self::default();
        if unknown_is_missing {
            t.0.insert("Unknown".to_string());
        }
        t
    }

    pub fn from_tokens<I: IntoIterator<Item = S>, S: Into<String>>(tokens: I) -> Self {
        Self(tokens.into_iter().map(Into::into).collect())
    }

    pub fn is_missing(&self, cell: &str) -> bool {
        self.0.contains(cell.trim())
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// Header plus row-major string cells, verbatim from the file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub missing_tokens: MissingTokens,
}

impl RawTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn is_missing(&self, cell: &str) -> bool {
        self.missing_tokens.is_missing(cell)
    }
}

pub fn read_csv(path: &Path, missing_tokens: MissingTokens) -> Result<RawTable, IngestError> {
    let mut file = File::open(path).map_err(|source| IngestError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    let mut text = String::new();
    file.read_to_string(&mut text)
        .map_err(|source| IngestError::Open {
            path: path.to_path_buf(),
            source,
        })?;
    if text.trim().is_empty() {
        return Err(IngestError::EmptyFile(path.to_path_buf()));
    }
    parse_csv(text.as_bytes(), missing_tokens)
}

/// Parse CSV text (RFC 4180 quoting). Ragged rows are rejected with their
/// line number.
pub fn parse_csv<R: Read>(input: R, missing_tokens: MissingTokens) -> Result<RawTable, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != header.len() {
            return Err(IngestError::RaggedRow {
                line: record.position().map_or(0, |p| p.line()),
                expected: header.len(),
                found: record.len(),
            });
        }
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(RawTable {
        header,
        rows,
        missing_tokens,
    })
}

/// Write a table back out; cells are quoted only when needed.
pub fn write_csv<W: std::io::Write>(table: &RawTable, out: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Id,
    Continuous,
    Categorical,
    Binary,
    Label,
}

/// Expected column names per role. Header matching ignores ASCII case and
/// surrounding whitespace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub id: Option<String>,
    pub label: String,
    pub continuous: Vec<String>,
    pub categorical: Vec<String>,
    pub binary: Vec<String>,
}

impl Default for SchemaSpec {
    fn default() -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        Self {
            id: Some("id".into()),
            label: "stroke".into(),
            continuous: s(&["age", "avg_glucose_level", "bmi"]),
            categorical: s(&[
                "gender",
                "ever_married",
                "work_type",
                "residence_type",
                "smoking_status",
            ]),
            binary: s(&["hypertension", "heart_disease"]),
        }
    }
}

impl SchemaSpec {
    fn expected(&self) -> Vec<(&str, ColumnRole)> {
        let mut out = Vec::new();
        if let Some(id) = &self.id {
            out.push((id.as_str(), ColumnRole::Id));
        }
        out.extend(self.continuous.iter().map(|c| (c.as_str(), ColumnRole::Continuous)));
        out.extend(self.categorical.iter().map(|c| (c.as_str(), ColumnRole::Categorical)));
        out.extend(self.binary.iter().map(|c| (c.as_str(), ColumnRole::Binary)));
        out.push((self.label.as_str(), ColumnRole::Label));
        out
    }
}

/// Role assignment for the columns of a validated table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    /// `(header name, role)` in header order, expected columns only.
    pub columns: Vec<(String, ColumnRole)>,
    /// Header names not named by the schema spec.
    pub unexpected: Vec<String>,
}

impl Schema {
    pub fn role_of(&self, name: &str) -> Option<ColumnRole> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, r)| *r)
    }

    pub fn names_with(&self, role: ColumnRole) -> Vec<String> {
        self.columns
            .iter()
            .filter(|(_, r)| *r == role)
            .map(|(n, _)| n.clone())
            .collect()
    }

    pub fn label_column(&self) -> &str {
        self.columns
            .iter()
            .find(|(_, r)| *r == ColumnRole::Label)
            .map(|(n, _)| n.as_str())
            .expect("validated schema has a label column")
    }
}

fn normalize_name(s: &str) -> String {
    s.trim().to_ascii_lowercase()
}

pub(crate) fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parse a label cell: `1`/`0` (any numeric spelling), yes/no, true/false,
/// stroke/no stroke.
pub(crate) fn parse_label(cell: &str) -> Option<u8> {
    if let Some(v) = parse_number(cell) {
        return if v == 1.0 {
            Some(1)
        } else if v == 0.0 {
            Some(0)
        } else {
            None
        };
    }
    match cell.trim().to_ascii_lowercase().as_str() {
        "yes" | "true" | "stroke" => Some(1),
        "no" | "false" | "no stroke" | "no_stroke" => Some(0),
        _ => None,
    }
}

pub fn validate_schema(table: &RawTable, spec: &SchemaSpec) -> Result<Schema, IngestError> {
    if table.rows.is_empty() {
        return Err(IngestError::EmptyTable);
    }
    let normalized: Vec<String> = table.header.iter().map(|h| normalize_name(h)).collect();
    let mut columns = Vec::new();
    let mut claimed = vec![false; table.header.len()];
    for (name, role) in spec.expected() {
        let Some(idx) = normalized.iter().position(|h| *h == normalize_name(name)) else {
            return Err(if role == ColumnRole::Label {
                IngestError::MissingLabel(name.to_string())
            } else {
                IngestError::MissingColumn(name.to_string())
            });
        };
        claimed[idx] = true;
        columns.push((idx, table.header[idx].clone(), role));
    }
    columns.sort_by_key(|(idx, _, _)| *idx);

    for (idx, name, role) in &columns {
        for (r, row) in table.rows.iter().enumerate() {
            let cell = &row[*idx];
            let coords = || (r + 1, name.clone(), cell.clone());
            match role {
                ColumnRole::Continuous if !table.is_missing(cell) => {
                    if parse_number(cell).is_none() {
                        let (row, column, value) = coords();
                        return Err(IngestError::NonNumeric { row, column, value });
                    }
                }
                ColumnRole::Binary if !table.is_missing(cell) => {
                    if !matches!(parse_number(cell), Some(v) if v == 0.0 || v == 1.0) {
                        let (row, column, value) = coords();
                        return Err(IngestError::NotBinary { row, column, value });
                    }
                }
                ColumnRole::Label => {
                    if parse_label(cell).is_none() {
                        let (row, column, value) = coords();
                        return Err(IngestError::NotBinary { row, column, value });
                    }
                }
                _ => {}
            }
        }
    }

    let unexpected = table
        .header
        .iter()
        .zip(&claimed)
        .filter(|(_, c)| !**c)
        .map(|(h, _)| h.clone())
        .collect();
    Ok(Schema {
        columns: columns.into_iter().map(|(_, n, r)| (n, r)).collect(),
        unexpected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingProfile {
    /// `(column, missing count)` in header order.
    pub per_column: Vec<(String, usize)>,
    pub rows: usize,
    pub rows_with_missing: usize,
}

impl MissingProfile {
    pub fn count(&self, column: &str) -> Option<usize> {
        self.per_column
            .iter()
            .find(|(c, _)| c.eq_ignore_ascii_case(column))
            .map(|(_, n)| *n)
    }

    pub fn total(&self) -> usize {
        self.per_column.iter().map(|(_, n)| n).sum()
    }

    pub fn percent(&self, column: &str) -> Option<f64> {
        let n = self.count(column)?;
        Some(if self.rows == 0 {
            0.0
        } else {
            100.0 * n as f64 / self.rows as f64
        })
    }
}

pub fn missing_profile(table: &RawTable) -> MissingProfile {
    let mut counts = vec![0usize; table.header.len()];
    let mut rows_with_missing = 0;
    for row in &table.rows {
        let mut any = false;
        for (c, cell) in row.iter().enumerate() {
            if table.is_missing(cell) {
                counts[c] += 1;
                any = true;
            }
        }
        rows_with_missing += any as usize;
    }
    MissingProfile {
        per_column: table.header.iter().cloned().zip(counts).collect(),
        rows: table.rows.len(),
        rows_with_missing,
    }
}
