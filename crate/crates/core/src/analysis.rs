//! Z-normalization, Pearson correlation, correlation reports and the two
//! failure-mode detectors (copied forward translation, code switching).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::QEDataset;
use crate::metrics::{sentence_bleu, BleuConfig};
use crate::text::{detect_scripts, tokenize, Scheme};
use crate::Scalar;

/// BLEU above which a forward translation counts as a verbatim copy.
pub const FAILED_FORWARD_BLEU: f64 = 95.0;

/// Histogram bin width for z-score distributions.
pub const BIN_WIDTH: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("need at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series is constant")]
    ConstantSeries,
    #[error("series contains a non-finite value")]
    NonFinite,
}

/// Z-scores plus the population statistics used to produce them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZSeries<T = f64> {
    pub values: Vec<T>,
    pub mean_used: T,
    pub std_used: T,
    /// Input was constant; every value is zero.
    pub degenerate: bool,
}

fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |a, x| a + *x) / T::from_count(xs.len())
}

fn population_std<T: Scalar>(xs: &[T], m: T) -> T {
    (xs.iter().fold(T::zero(), |a, x| a + (*x - m) * (*x - m)) / T::from_count(xs.len())).sqrt()
}

/// `(x - mean) / std` with the population standard deviation.
pub fn z_normalize<T: Scalar>(xs: &[T]) -> Result<ZSeries<T>, AnalysisError> {
    if xs.len() < 2 {
        return Err(AnalysisError::TooFewValues(xs.len()));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let m = mean(xs);
    let sd = population_std(xs, m);
    if sd == T::zero() {
        log::warn!("z-normalizing a constant series; all z-scores are 0");
        return Ok(ZSeries {
            values: vec![T::zero(); xs.len()],
            mean_used: m,
            std_used: sd,
            degenerate: true,
        });
    }
    Ok(ZSeries {
        values: xs.iter().map(|x| (*x - m) / sd).collect(),
        mean_used: m,
        std_used: sd,
        degenerate: false,
    })
}

/// Product-moment correlation, clamped to `[-1, 1]`.
pub fn pearson_r<T: Scalar>(xs: &[T], ys: &[T]) -> Result<T, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(AnalysisError::TooFewValues(xs.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (*x - mx, *y - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(AnalysisError::ConstantSeries);
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// Per-record failure-mode flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureFlags {
    pub record_id: usize,
    pub failed_forward: bool,
    pub code_switched: bool,
    pub bleu_src_vs_mt: f64,
    pub scripts: BTreeSet<String>,
}

impl FailureFlags {
    pub fn compute(record_id: usize, original: &str, translation: &str) -> Self {
        let (failed_forward, bleu_src_vs_mt) = detect_failed_forward(original, translation);
        let (code_switched, scripts) = detect_code_switch(original);
        Self {
            record_id,
            failed_forward,
            code_switched,
            bleu_src_vs_mt,
            scripts,
        }
    }
}

/// Flags a forward translation that copied its source: BLEU of the
/// translation against the original above 95, default BLEU settings.
pub fn detect_failed_forward(original: &str, translation: &str) -> (bool, f64) {
    let bleu = sentence_bleu(
        &tokenize(translation, Scheme::Simple),
        &tokenize(original, Scheme::Simple),
        &BleuConfig::default(),
    )
    .value;
    (bleu > FAILED_FORWARD_BLEU, bleu)
}

pub fn detect_code_switch(text: &str) -> (bool, BTreeSet<String>) {
    let p = detect_scripts(text);
    (p.mixed, p.scripts)
}

/// Pearson correlations of every metric column against the human z-means,
/// plus the full pairwise matrix over `human` and all metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// Row/column labels of `matrix`; `human` first, then metrics by id.
    pub labels: Vec<String>,
    /// `None` marks an undefined cell (constant column, too few pairs).
    pub per_metric: BTreeMap<String, Option<f64>>,
    pub matrix: Vec<Vec<Option<f64>>>,
    /// Pairs used for each cell after dropping missing values.
    pub pair_counts: Vec<Vec<usize>>,
    /// Records missing a value, per metric.
    pub excluded: BTreeMap<String, usize>,
    pub n: usize,
}

pub const HUMAN: &str = "human";

/// [`correlate_columns`] with the dataset's per-record z-means as the
/// human column.
pub fn correlate(ds: &QEDataset, metric_columns: &BTreeMap<String, Vec<Option<f64>>>) -> Result<CorrelationReport, AnalysisError> {
    let human: Vec<f64> = ds.records().iter().map(|r| r.z_mean).collect();
    correlate_columns(&human, metric_columns)
}

pub fn correlate_columns(
    human: &[f64],
    metric_columns: &BTreeMap<String, Vec<Option<f64>>>,
) -> Result<CorrelationReport, AnalysisError> {
    let n = human.len();
    for col in metric_columns.values() {
        if col.len() != n {
            return Err(AnalysisError::LengthMismatch(n, col.len()));
        }
    }
    let mut labels = vec![HUMAN.to_owned()];
    labels.extend(metric_columns.keys().cloned());
    let mut columns: Vec<Vec<Option<f64>>> = vec![human.iter().map(|v| Some(*v)).collect()];
    columns.extend(metric_columns.values().cloned());

    let k = labels.len();
    let mut matrix = vec![vec![None; k]; k];
    let mut pair_counts = vec![vec![0; k]; k];
    for i in 0..k {
        for j in i..k {
            let (xs, ys): (Vec<f64>, Vec<f64>) = columns[i]
                .iter()
                .zip(&columns[j])
                .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                .unzip();
            let cell = match pearson_r(&xs, &ys) {
                Ok(_) if i == j => Some(1.0),
                Ok(r) => Some(r),
                Err(e) => {
                    log::debug!("correlation {} vs {} undefined: {e}", labels[i], labels[j]);
                    None
                }
            };
            matrix[i][j] = cell;
            matrix[j][i] = cell;
            pair_counts[i][j] = xs.len();
            pair_counts[j][i] = xs.len();
        }
    }
    let per_metric = labels[1..]
        .iter()
        .enumerate()
        .map(|(m, l)| (l.clone(), matrix[0][m + 1]))
        .collect();
    let excluded = metric_columns
        .iter()
        .map(|(id, col)| (id.clone(), col.iter().filter(|v| v.is_none()).count()))
        .collect();
    Ok(CorrelationReport {
        labels,
        per_metric,
        matrix,
        pair_counts,
        excluded,
        n,
    })
}

fn fmt_cell(c: Option<f64>) -> String {
    c.map_or_else(|| "NA".to_owned(), |v| format!("{v:.6}"))
}

impl CorrelationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Matrix as aligned, tab-separated columns; undefined cells print `NA`.
    pub fn to_tsv(&self) -> String {
        let width = self
            .labels
            .iter()
            .map(|l| l.len())
            .chain(std::iter::once(9))
            .max()
            .unwrap_or(9);
        let mut out = format!("{:<width$}", "metric");
        for l in &self.labels {
            write!(out, "\t{l:<width$}").unwrap();
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.matrix) {
            write!(out, "{l:<width$}").unwrap();
            for c in row {
                write!(out, "\t{:<width$}", fmt_cell(*c)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Summary statistics of one group. Statistics are `None` for an empty group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub count: usize,
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub std: Option<f64>,
    /// 25th, 50th and 75th percentiles, linear interpolation.
    pub quartiles: Option<[f64; 3]>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl GroupSummary {
    fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                count: 0,
                mean: None,
                std: None,
                quartiles: None,
                min: None,
                max: None,
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = mean(values);
        Self {
            count: values.len(),
            mean: Some(m),
            std: Some(population_std(values, m)),
            quartiles: Some([quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75)]),
            min: sorted.first().copied(),
            max: sorted.last().copied(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub flagged: usize,
    pub unflagged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupDistribution {
    pub flagged: GroupSummary,
    pub unflagged: GroupSummary,
    /// Bins of width [`BIN_WIDTH`] covering the observed range of both groups.
    pub bins: Vec<HistogramBin>,
}

/// Splits z-scores by flag and summarizes each side.
pub fn group_distribution(z: &[f64], flags: &[bool]) -> Result<GroupDistribution, AnalysisError> {
    if z.len() != flags.len() {
        return Err(AnalysisError::LengthMismatch(z.len(), flags.len()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let pick = |want: bool| -> Vec<f64> { z.iter().zip(flags).filter(|(_, f)| **f == want).map(|(v, _)| *v).collect() };
    let (on, off) = (pick(true), pick(false));

    let mut bins = Vec::new();
    if let (Some(lo), Some(hi)) = (
        z.iter().copied().min_by(f64::total_cmp),
        z.iter().copied().max_by(f64::total_cmp),
    ) {
        let start = (lo / BIN_WIDTH).floor();
        let index = |v: f64| ((v / BIN_WIDTH).floor() - start) as usize;
        bins = (0..=index(hi))
            .map(|i| HistogramBin {
                left: (start + i as f64) * BIN_WIDTH,
                flagged: 0,
                unflagged: 0,
            })
            .collect();
        for (v, f) in z.iter().zip(flags) {
            let b = &mut bins[index(*v)];
            if *f {
                b.flagged += 1;
            } else {
                b.unflagged += 1;
            }
        }
    }
    Ok(GroupDistribution {
        flagged: GroupSummary::of(&on),
        unflagged: GroupSummary::of(&off),
        bins,
    })
}

impl GroupDistribution {
    /// Plot data: `bin_left,count_flagged,count_unflagged`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,count_flagged,count_unflagged\n");
        for b in &self.bins {
            writeln!(out, "{},{},{}", b.left, b.flagged, b.unflagged).unwrap();
        }
        out
    }
}
