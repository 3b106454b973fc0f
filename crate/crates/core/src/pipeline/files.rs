//! Intermediate stage files: tab-separated, one header line, text fields
//! escaped so they never contain a raw tab or newline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::PipelineError;
use crate::analysis::FailureFlags;
use crate::roundtrip::RoundTripResult;

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

fn data_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(format!("{}:{line}: {msg}", path.display()))
}

fn rows(path: &Path, columns: usize) -> Result<Vec<(usize, Vec<String>)>, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<String> = line.split('\t').map(str::to_owned).collect();
        if cols.len() != columns {
            return Err(data_err(path, i + 1, format!("expected {columns} columns")));
        }
        out.push((i + 1, cols));
    }
    Ok(out)
}

fn parse_id(path: &Path, line: usize, s: &str) -> Result<usize, PipelineError> {
    s.parse().map_err(|_| data_err(path, line, format!("bad record id `{s}`")))
}

pub fn write_roundtrips(results: &[RoundTripResult]) -> String {
    let mut out = String::from("record_id\tback_translation\tsource\n");
    for r in results {
        writeln!(out, "{}\t{}\t{}", r.record_id, escape(&r.back_translation), r.source).unwrap();
    }
    out
}

/// Back-translations indexed by record id.
pub fn read_roundtrips(path: &Path, n: usize) -> Result<Vec<String>, PipelineError> {
    let mut out: Vec<Option<String>> = vec![None; n];
    for (line, cols) in rows(path, 3)? {
        let id = parse_id(path, line, &cols[0])?;
        let slot = out
            .get_mut(id)
            .ok_or_else(|| data_err(path, line, format!("record id {id} out of range")))?;
        *slot = Some(unescape(&cols[1]));
    }
    out.into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| PipelineError::Data(format!("{}: record {i} missing", path.display()))))
        .collect()
}

/// Score rows `(record_id, metric_id, value)`.
pub fn write_scores(rows: &[(usize, String, f64)]) -> String {
    let mut out = String::from("record_id\tmetric_id\tvalue\n");
    for (id, metric, v) in rows {
        writeln!(out, "{id}\t{metric}\t{v}").unwrap();
    }
    out
}

/// Metric columns of length `n`; absent cells are `None`.
pub fn read_scores(path: &Path, n: usize) -> Result<BTreeMap<String, Vec<Option<f64>>>, PipelineError> {
    let mut cols: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for (line, c) in rows(path, 3)? {
        let id = parse_id(path, line, &c[0])?;
        if id >= n {
            return Err(data_err(path, line, format!("record id {id} out of range")));
        }
        let v: f64 = c[2]
            .parse()
            .map_err(|_| data_err(path, line, format!("bad value `{}`", c[2])))?;
        cols.entry(c[1].clone()).or_insert_with(|| vec![None; n])[id] = Some(v);
    }
    Ok(cols)
}

pub fn write_flags(flags: &[FailureFlags]) -> String {
    let mut out = String::from("record_id\tfailed_forward\tcode_switched\n");
    for f in flags {
        writeln!(out, "{}\t{}\t{}", f.record_id, f.failed_forward, f.code_switched).unwrap();
    }
    out
}

/// `(failed_forward, code_switched)` per record id.
pub fn read_flags(path: &Path, n: usize) -> Result<Vec<(bool, bool)>, PipelineError> {
    let mut out = vec![(false, false); n];
    let parse_bool = |line, s: &str| match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(data_err(path, line, format!("bad flag `{s}`"))),
    };
    for (line, c) in rows(path, 3)? {
        let id = parse_id(path, line, &c[0])?;
        let slot = out
            .get_mut(id)
            .ok_or_else(|| data_err(path, line, format!("record id {id} out of range")))?;
        *slot = (parse_bool(line, &c[1])?, parse_bool(line, &c[2])?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn escape_round_trip(s in "\\PC*|[\\\\\t\n\r ab]*") {
            let e = escape(&s);
            prop_assert!(!e.contains('\t') && !e.contains('\n') && !e.contains('\r'));
            prop_assert_eq!(unescape(&e), s);
        }
    }

    #[test]
    fn score_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scores.tsv");
        std::fs::write(&p, write_scores(&[(0, "bleu".into(), 12.5), (2, "bleu".into(), 0.1)])).unwrap();
        let cols = read_scores(&p, 3).unwrap();
        assert_eq!(cols["bleu"], [Some(12.5), None, Some(0.1)]);
        assert!(read_scores(&p, 2).is_err());
    }
}
