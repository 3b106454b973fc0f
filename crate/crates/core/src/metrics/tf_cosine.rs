use super::{config_hash, MetricScore, Scale};
use crate::text::{term_vectors, tokenize, Scheme, Stopwords};

/// Cosine of raw term-frequency vectors after stopword removal, with the
/// built-in English stopword list.
pub fn tf_cosine(a_text: &str, b_text: &str) -> MetricScore {
    tf_cosine_with(a_text, b_text, Stopwords::english())
}

pub fn tf_cosine_with(a_text: &str, b_text: &str, stopwords: &Stopwords) -> MetricScore {
    let hash = config_hash(&("tf_cosine", stopwords.len()));
    let a = stopwords.remove(&tokenize(a_text, Scheme::Simple));
    let b = stopwords.remove(&tokenize(b_text, Scheme::Simple));
    if a.is_empty() && b.is_empty() {
        return MetricScore::new("tf_cosine", 0.0, Scale::UnitInterval, hash)
            .warn("no content words in either sentence");
    }
    if a.is_empty() || b.is_empty() {
        return MetricScore::new("tf_cosine", 0.0, Scale::UnitInterval, hash);
    }
    let tv = term_vectors(&a, &b);
    let dot: u64 = tv.counts_a.iter().zip(&tv.counts_b).map(|(x, y)| x * y).sum();
    let na: u64 = tv.counts_a.iter().map(|x| x * x).sum();
    let nb: u64 = tv.counts_b.iter().map(|x| x * x).sum();
    // sqrt of the product keeps self-similarity exactly 1 for integer counts
    let value = dot as f64 / ((na * nb) as f64).sqrt();
    MetricScore::new("tf_cosine", value, Scale::UnitInterval, hash)
}
