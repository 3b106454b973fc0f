//! Reference-free translation quality estimation by round-trip translation.
//!
//! A forward translation is translated back into the source language and
//! the back-translation is compared with the original sentence, using
//! lexical metrics ([`metrics`]) and sentence-embedding cosine
//! ([`embedding`]). The resulting similarity columns are correlated with
//! human direct-assessment scores ([`analysis`]).

pub mod analysis;
pub mod dataset;
pub mod embedding;
mod http;
pub mod metrics;
pub mod pipeline;
pub mod roundtrip;
pub mod scalar;
pub mod text;

pub use scalar::Scalar;

/// Embedding vector over `f64`.
pub type Embedding = embedding::EmbeddingVector<f64>;
/// Cosine similarity over `f64`.
pub type Similarity = embedding::SimilarityScore<f64>;
/// Z-scores over `f64`.
pub type ZScores = analysis::ZSeries<f64>;
