use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{config_hash, MetricScore, Scale};
use crate::text::TokenSequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    /// Add one to matches and totals for orders >= 2.
    AddOneHigherOrder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BleuConfig {
    pub max_n: usize,
    pub smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self {
            max_n: 4,
            smoothing: Smoothing::AddOneHigherOrder,
        }
    }
}

impl BleuConfig {
    pub fn validate(&self) -> Result<(), String> {
        if (1..=9).contains(&self.max_n) {
            Ok(())
        } else {
            Err(format!("bleu max_n must be in 1..=9, got {}", self.max_n))
        }
    }
}

/// Clipped n-gram match counts and hypothesis n-gram totals per order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BleuStats {
    /// `matches[n - 1]` is the clipped match count for order `n`.
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

pub fn bleu_stats(hyp: &[String], reference: &[String], max_n: usize) -> BleuStats {
    let mut matches = Vec::with_capacity(max_n);
    let mut totals = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        let m = h
            .iter()
            .map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0)))
            .sum();
        matches.push(m);
        totals.push((hyp.len() + 1).saturating_sub(n) as u64);
    }
    BleuStats {
        matches,
        totals,
        hyp_len: hyp.len(),
        ref_len: reference.len(),
    }
}

/// Sentence-level BLEU on the 0-100 scale.
///
/// Empty hypothesis or reference scores 0 with a warning.
pub fn sentence_bleu(hyp: &TokenSequence, reference: &TokenSequence, cfg: &BleuConfig) -> MetricScore {
    let hash = config_hash(cfg);
    let zero = |why: &str| MetricScore::new("bleu", 0.0, Scale::Percent, hash.clone()).warn(why);
    if hyp.is_empty() {
        return zero("empty hypothesis");
    }
    if reference.is_empty() {
        return zero("empty reference");
    }

    let stats = bleu_stats(hyp.tokens(), reference.tokens(), cfg.max_n);
    let mut log_sum = 0.0;
    for (i, (&m, &t)) in stats.matches.iter().zip(&stats.totals).enumerate() {
        let (m, t) = match cfg.smoothing {
            Smoothing::AddOneHigherOrder if i >= 1 => (m + 1, t + 1),
            _ => (m, t),
        };
        if m == 0 {
            return MetricScore::new("bleu", 0.0, Scale::Percent, hash);
        }
        log_sum += (m as f64 / t as f64).ln();
    }
    let brevity = if stats.hyp_len >= stats.ref_len {
        1.0
    } else {
        (1.0 - stats.ref_len as f64 / stats.hyp_len as f64).exp()
    };
    let value = 100.0 * brevity * (log_sum / cfg.max_n as f64).exp();
    MetricScore::new("bleu", value, Scale::Percent, hash)
}
