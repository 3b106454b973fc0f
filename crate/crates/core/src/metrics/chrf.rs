use serde::{Deserialize, Serialize};

use super::{config_hash, MetricScore, Scale};
use crate::text::{ngrams_of_chars, nfc};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChrfConfig {
    pub max_n: usize,
    pub beta: f64,
}

impl Default for ChrfConfig {
    fn default() -> Self {
        Self { max_n: 6, beta: 2.0 }
    }
}

impl ChrfConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_n < 1 {
            return Err("chrf max_n must be >= 1".into());
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(format!("chrf beta must be positive, got {}", self.beta));
        }
        Ok(())
    }
}

/// Character n-gram F-score on the 0-100 scale.
///
/// Precision and recall are averaged over the orders where at least one
/// side has n-grams. Two empty texts score 100 with a warning.
pub fn chrf(hyp_text: &str, ref_text: &str, cfg: &ChrfConfig) -> MetricScore {
    let hash = config_hash(cfg);
    let strip = |t: &str| -> Vec<char> { nfc(t).chars().filter(|c| !c.is_whitespace()).collect() };
    let hyp = strip(hyp_text);
    let reference = strip(ref_text);
    if hyp.is_empty() && reference.is_empty() {
        return MetricScore::new("chrf", 100.0, Scale::Percent, hash).warn("both texts empty");
    }

    let (mut p_sum, mut r_sum, mut orders) = (0.0, 0.0, 0usize);
    for n in 1..=cfg.max_n {
        let h = ngrams_of_chars(&hyp, n);
        let r = ngrams_of_chars(&reference, n);
        let h_total: usize = h.values().sum();
        let r_total: usize = r.values().sum();
        if h_total == 0 && r_total == 0 {
            continue;
        }
        let overlap: usize = h
            .iter()
            .map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0)))
            .sum();
        if h_total > 0 {
            p_sum += overlap as f64 / h_total as f64;
        }
        if r_total > 0 {
            r_sum += overlap as f64 / r_total as f64;
        }
        orders += 1;
    }
    let precision = p_sum / orders as f64;
    let recall = r_sum / orders as f64;
    if precision + recall == 0.0 {
        return MetricScore::new("chrf", 0.0, Scale::Percent, hash);
    }
    let b2 = cfg.beta * cfg.beta;
    let f = (1.0 + b2) * precision * recall / (b2 * precision + recall);
    MetricScore::new("chrf", 100.0 * f, Scale::Percent, hash)
}
