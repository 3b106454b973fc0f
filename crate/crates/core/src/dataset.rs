//! Sentence-level QE datasets with human direct-assessment scores.
//!
//! The on-disk dialect is UTF-8 TSV, one record per line, six columns:
//! original, translation, raw scores, mean, z-scores, z-mean. Score lists
//! are bracketed and comma-separated (`[70, 85, 90]`). A first line whose
//! third column does not start with `[` is a header and is skipped.

use std::fmt::{self, Write as _};
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Absolute tolerance between a stated mean and the mean of its scores.
pub const MEAN_TOLERANCE: f64 = 1e-6;

const COLUMNS: usize = 6;
const COL_ORIGINAL: usize = 0;
const COL_TRANSLATION: usize = 1;
const COL_SCORES: usize = 2;
const COL_MEAN: usize = 3;
const COL_Z_SCORES: usize = 4;
const COL_Z_MEAN: usize = 5;

/// Two-letter ISO-639-1 language code.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LangCode(String);

impl LangCode {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for LangCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == 2 && s.bytes().all(|b| b.is_ascii_lowercase()) {
            Ok(Self(s.to_owned()))
        } else {
            Err(format!("`{s}` is not a two-letter lowercase ISO-639-1 code"))
        }
    }
}

impl TryFrom<String> for LangCode {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<LangCode> for String {
    fn from(c: LangCode) -> Self {
        c.0
    }
}

impl fmt::Display for LangCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LanguagePair {
    pub source: LangCode,
    pub target: LangCode,
}

impl LanguagePair {
    pub fn new(source: LangCode, target: LangCode) -> Self {
        Self { source, target }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QERecord {
    pub id: usize,
    pub original: String,
    pub translation: String,
    pub raw_scores: Vec<f64>,
    pub mean_score: f64,
    pub z_scores: Vec<f64>,
    pub z_mean: f64,
}

/// Records in file order with dense ids from 0. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct QEDataset {
    language_pair: LanguagePair,
    records: Vec<QERecord>,
}

impl QEDataset {
    /// Builds a dataset, renumbering record ids densely from 0.
    pub fn new(language_pair: LanguagePair, records: Vec<QERecord>) -> Self {
        let records = records
            .into_iter()
            .enumerate()
            .map(|(i, r)| QERecord { id: i, ..r })
            .collect();
        Self {
            language_pair,
            records,
        }
    }

    /// Wraps records as-is, without renumbering. Use [`validate_dataset`]
    /// to check them.
    pub fn from_parts(language_pair: LanguagePair, records: Vec<QERecord>) -> Self {
        Self {
            language_pair,
            records,
        }
    }

    pub fn language_pair(&self) -> &LanguagePair {
        &self.language_pair
    }

    pub fn records(&self) -> &[QERecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Serializes back to the TSV dialect, without a header. Numbers use the
    /// shortest representation that parses back to the same value.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.original,
                r.translation,
                format_list(&r.raw_scores),
                r.mean_score,
                format_list(&r.z_scores),
                r.z_mean
            )
            .unwrap();
        }
        out
    }
}

fn format_list(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(", "))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowErrorKind {
    ColumnCount,
    BadNumber,
    EmptyField,
    EmptyScores,
    ScoreOutOfRange,
    MeanMismatch,
    LengthMismatch,
    IdMismatch,
}

impl fmt::Display for RowErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("kind serializes");
        f.write_str(s.as_str().expect("kind is a string"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RowError {
    pub row: usize,
    pub kind: RowErrorKind,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub row_errors: Vec<RowError>,
    pub accepted_count: usize,
    pub rejected_count: usize,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.row_errors.is_empty()
    }

    /// One JSON object per error: `{"row", "kind", "message"}`.
    pub fn to_jsonl(&self) -> String {
        self.row_errors
            .iter()
            .map(|e| serde_json::to_string(e).expect("row error serializes") + "\n")
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("accepted {}, rejected {}\n", self.accepted_count, self.rejected_count);
        for e in &self.row_errors {
            writeln!(out, "row {}: {}: {}", e.row, e.kind, e.message).unwrap();
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("malformed row {row}, column {column}: {kind}: {message}")]
    MalformedRow {
        row: usize,
        column: usize,
        kind: RowErrorKind,
        message: String,
    },
    #[error("input is not valid UTF-8 (byte offset {0})")]
    Encoding(usize),
    #[error("no data rows")]
    EmptyInput,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct RowFailure {
    column: usize,
    kind: RowErrorKind,
    message: String,
}

fn fail(column: usize, kind: RowErrorKind, message: impl Into<String>) -> RowFailure {
    RowFailure {
        column,
        kind,
        message: message.into(),
    }
}

fn parse_number(s: &str, column: usize) -> Result<f64, RowFailure> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| fail(column, RowErrorKind::BadNumber, format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(fail(column, RowErrorKind::BadNumber, format!("`{s}` is not finite")));
    }
    Ok(v)
}

fn parse_list(s: &str, column: usize) -> Result<Vec<f64>, RowFailure> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| fail(column, RowErrorKind::BadNumber, format!("`{s}` is not a bracketed list")))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|x| parse_number(x, column)).collect()
}

/// Checks every record-level invariant. The first violation wins.
fn check_record(r: &QERecord) -> Result<(), RowFailure> {
    if r.original.trim().is_empty() {
        return Err(fail(COL_ORIGINAL, RowErrorKind::EmptyField, "original is empty"));
    }
    if r.translation.trim().is_empty() {
        return Err(fail(COL_TRANSLATION, RowErrorKind::EmptyField, "translation is empty"));
    }
    if r.raw_scores.is_empty() {
        return Err(fail(COL_SCORES, RowErrorKind::EmptyScores, "no raw scores"));
    }
    if let Some(bad) = r.raw_scores.iter().find(|s| !(0.0..=100.0).contains(*s)) {
        return Err(fail(COL_SCORES, RowErrorKind::ScoreOutOfRange, format!("score {bad} outside [0, 100]")));
    }
    if !(0.0..=100.0).contains(&r.mean_score) {
        return Err(fail(COL_MEAN, RowErrorKind::ScoreOutOfRange, format!("mean {} outside [0, 100]", r.mean_score)));
    }
    let mean = r.raw_scores.iter().sum::<f64>() / r.raw_scores.len() as f64;
    if (mean - r.mean_score).abs() > MEAN_TOLERANCE {
        return Err(fail(
            COL_MEAN,
            RowErrorKind::MeanMismatch,
            format!("stated mean {} but scores average {mean}", r.mean_score),
        ));
    }
    if !r.z_scores.is_empty() && r.z_scores.len() != r.raw_scores.len() {
        return Err(fail(
            COL_Z_SCORES,
            RowErrorKind::LengthMismatch,
            format!("{} z-scores for {} raw scores", r.z_scores.len(), r.raw_scores.len()),
        ));
    }
    Ok(())
}

fn parse_row(line: &str, id: usize) -> Result<QERecord, RowFailure> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != COLUMNS {
        return Err(fail(
            cols.len(),
            RowErrorKind::ColumnCount,
            format!("expected {COLUMNS} columns, found {}", cols.len()),
        ));
    }
    let record = QERecord {
        id,
        original: cols[COL_ORIGINAL].to_owned(),
        translation: cols[COL_TRANSLATION].to_owned(),
        raw_scores: parse_list(cols[COL_SCORES], COL_SCORES)?,
        mean_score: parse_number(cols[COL_MEAN], COL_MEAN)?,
        z_scores: parse_list(cols[COL_Z_SCORES], COL_Z_SCORES)?,
        z_mean: parse_number(cols[COL_Z_MEAN], COL_Z_MEAN)?,
    };
    check_record(&record)?;
    Ok(record)
}

fn is_header(line: &str) -> bool {
    line.split('\t')
        .nth(COL_SCORES)
        .is_none_or(|c| !c.trim_start().starts_with('['))
}

/// Parses a QE TSV stream.
///
/// Strict mode stops at the first bad row. Lenient mode skips bad rows and
/// lists them in the report; accepted records are renumbered densely.
/// Row indices count data lines from 0, excluding the header and blank lines.
pub fn parse_qe_tsv<R: Read>(
    mut stream: R,
    language_pair: LanguagePair,
    mode: ParseMode,
) -> Result<(QEDataset, ValidationReport), IngestError> {
    let mut bytes = Vec::new();
    stream.read_to_end(&mut bytes)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| IngestError::Encoding(e.valid_up_to()))?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);

    let mut lines = text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .filter(|l| !l.trim().is_empty())
        .peekable();
    if lines.peek().is_some_and(|l| is_header(l)) {
        lines.next();
    }

    let mut records = Vec::new();
    let mut report = ValidationReport::default();
    for (row, line) in lines.enumerate() {
        match parse_row(line, records.len()) {
            Ok(r) => {
                records.push(r);
                report.accepted_count += 1;
            }
            Err(f) => {
                if mode == ParseMode::Strict {
                    return Err(IngestError::MalformedRow {
                        row,
                        column: f.column,
                        kind: f.kind,
                        message: f.message,
                    });
                }
                log::warn!("skipping row {row}: {}", f.message);
                report.rejected_count += 1;
                report.row_errors.push(RowError {
                    row,
                    kind: f.kind,
                    message: f.message,
                });
            }
        }
    }
    if records.is_empty() && mode == ParseMode::Strict {
        return Err(IngestError::EmptyInput);
    }
    Ok((QEDataset::from_parts(language_pair, records), report))
}

/// Re-checks every record invariant plus id density. Idempotent.
pub fn validate_dataset(ds: &QEDataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (i, r) in ds.records.iter().enumerate() {
        let outcome = if r.id != i {
            Err(fail(0, RowErrorKind::IdMismatch, format!("record {i} has id {}", r.id)))
        } else {
            check_record(r)
        };
        match outcome {
            Ok(()) => report.accepted_count += 1,
            Err(f) => {
                report.rejected_count += 1;
                report.row_errors.push(RowError {
                    row: i,
                    kind: f.kind,
                    message: f.message,
                });
            }
        }
    }
    report
}
