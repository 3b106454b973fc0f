//! Lexical sentence-similarity metrics: BLEU, chrF, TER and the
//! term-frequency cosine.

mod bleu;
mod chrf;
mod ter;
mod tf_cosine;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use bleu::{bleu_stats, sentence_bleu, BleuConfig, BleuStats, Smoothing};
pub use chrf::{chrf, ChrfConfig};
pub use ter::{levenshtein, shift_block, ter, ter_edits, TerEdits};
pub use tf_cosine::{tf_cosine, tf_cosine_with};

/// Value range a metric reports on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// `[0, 1]`
    UnitInterval,
    /// `[-1, 1]`
    SignedUnit,
    /// `[0, 100]`
    Percent,
    /// `[0, inf)`; edit rates can exceed 1 when the hypothesis is longer
    /// than the reference.
    NonNegative,
}

impl Scale {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Scale::UnitInterval => (0.0, 1.0),
            Scale::SignedUnit => (-1.0, 1.0),
            Scale::Percent => (0.0, 100.0),
            Scale::NonNegative => (0.0, f64::INFINITY),
        }
    }

    pub fn contains(self, v: f64) -> bool {
        let (lo, hi) = self.bounds();
        v >= lo && v <= hi
    }

    pub(crate) fn clamp(self, v: f64) -> f64 {
        let (lo, hi) = self.bounds();
        v.clamp(lo, hi)
    }
}

/// A named similarity value with its scale and the hash of the
/// configuration that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricScore {
    pub metric_id: String,
    pub value: f64,
    pub scale: Scale,
    pub config_hash: String,
    /// Set when the value comes from a degenerate input (empty sentence,
    /// zero vector) rather than the metric's normal definition.
    pub warning: Option<String>,
}

impl MetricScore {
    pub(crate) fn new(metric_id: &str, value: f64, scale: Scale, config_hash: String) -> Self {
        Self {
            metric_id: metric_id.to_owned(),
            value: scale.clamp(value),
            scale,
            config_hash,
            warning: None,
        }
    }

    pub(crate) fn warn(mut self, msg: impl Into<String>) -> Self {
        self.warning = Some(msg.into());
        self
    }
}

impl fmt::Display for MetricScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{:.3}", self.metric_id, self.value)
    }
}

/// Short, stable digest of a serializable configuration.
pub fn config_hash<T: Serialize + ?Sized>(cfg: &T) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(&Sha256::digest(&json)[..8])
}

/// Metric identifiers accepted by the pipeline and `score-pair`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricId {
    Bleu,
    Chrf,
    Ter,
    TfCosine,
    EmbedCosine(String),
}

impl MetricId {
    pub const LEXICAL: [&'static str; 4] = ["bleu", "chrf", "ter", "tf_cosine"];

    pub fn is_embedding(&self) -> bool {
        matches!(self, MetricId::EmbedCosine(_))
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricId::Bleu => f.write_str("bleu"),
            MetricId::Chrf => f.write_str("chrf"),
            MetricId::Ter => f.write_str("ter"),
            MetricId::TfCosine => f.write_str("tf_cosine"),
            MetricId::EmbedCosine(m) => write!(f, "embed_cosine:{m}"),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("unknown metric `{0}`; valid metrics: bleu, chrf, ter, tf_cosine, embed_cosine:<model_id>")]
pub struct UnknownMetric(pub String);

impl std::str::FromStr for MetricId {
    type Err = UnknownMetric;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bleu" => Ok(MetricId::Bleu),
            "chrf" => Ok(MetricId::Chrf),
            "ter" => Ok(MetricId::Ter),
            "tf_cosine" => Ok(MetricId::TfCosine),
            _ => match s.strip_prefix("embed_cosine:") {
                Some(m) if !m.is_empty() => Ok(MetricId::EmbedCosine(m.to_owned())),
                _ => Err(UnknownMetric(s.to_owned())),
            },
        }
    }
}
