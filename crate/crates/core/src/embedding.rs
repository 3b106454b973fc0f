//! Sentence embeddings from pluggable backends and their cosine similarity.
//!
//! Two backends are provided: a precomputed JSONL store keyed by the
//! SHA-256 of the NFC-normalized sentence, and an HTTP encoder service
//! speaking the `/embed` protocol.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::text::nfc;
use crate::Scalar;

/// Largest batch a backend may send in one request.
pub const MAX_BATCH_SIZE: usize = 512;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("embedding must have at least one finite component")]
    InvalidVector,
    #[error("no embedding stored for sentence {0}")]
    MissingEmbedding(String),
    #[error("backend returned mixed dimensions ({expected} and {found})")]
    DimInconsistency { expected: usize, found: usize },
    #[error("transport error (status {status}): {body}")]
    Transport { status: u16, body: String },
    #[error("embedding store line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A non-empty, finite vector tagged with the model that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector<T = f64> {
    values: Vec<T>,
    model_id: String,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(values: Vec<T>, model_id: impl Into<String>) -> Result<Self, EmbeddingError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::InvalidVector);
        }
        Ok(Self {
            values,
            model_id: model_id.into(),
        })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Component-wise scale by `k`.
    pub fn scaled(&self, k: T) -> Result<Self, EmbeddingError> {
        Self::new(self.values.iter().map(|v| *v * k).collect(), self.model_id.clone())
    }
}

/// Cosine similarity in `[-1, 1]` with the model (and, once attached, the
/// record) it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityScore<T = f64> {
    pub value: T,
    pub model_id: String,
    pub pair_id: Option<usize>,
}

impl<T> SimilarityScore<T> {
    pub fn for_pair(mut self, id: usize) -> Self {
        self.pair_id = Some(id);
        self
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// `(A . B) / (|A| |B|)`, clamped to `[-1, 1]`.
///
/// The dot product accumulates in index order and the norms are multiplied
/// after taking roots, so swapping the arguments gives the same bits.
pub fn cosine_similarity<T: Scalar>(
    a: &EmbeddingVector<T>,
    b: &EmbeddingVector<T>,
) -> Result<SimilarityScore<T>, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let na = dot(&a.values, &a.values).sqrt();
    let nb = dot(&b.values, &b.values).sqrt();
    if na == T::zero() || nb == T::zero() {
        return Err(EmbeddingError::ZeroVector);
    }
    let value = dot(&a.values, &b.values) / (na * nb);
    Ok(SimilarityScore {
        value: value.max(-T::one()).min(T::one()),
        model_id: a.model_id.clone(),
        pair_id: None,
    })
}

/// Store key for a sentence: hex SHA-256 of its NFC form.
pub fn sentence_key(sentence: &str) -> String {
    hex::encode(Sha256::digest(nfc(sentence).as_bytes()))
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreLine {
    key: String,
    model: String,
    dim: usize,
    values: Vec<f64>,
}

/// Precomputed embeddings keyed by [`sentence_key`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingStore {
    entries: HashMap<String, EmbeddingVector>,
    dim: Option<usize>,
}

impl EmbeddingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn get(&self, key: &str) -> Option<&EmbeddingVector> {
        self.entries.get(key)
    }

    pub fn get_sentence(&self, sentence: &str) -> Option<&EmbeddingVector> {
        self.get(&sentence_key(sentence))
    }

    /// Inserts under an explicit key; returns `true` if it replaced an entry.
    pub fn insert_key(&mut self, key: String, v: EmbeddingVector) -> Result<bool, EmbeddingError> {
        match self.dim {
            Some(d) if d != v.dim() => {
                return Err(EmbeddingError::DimInconsistency {
                    expected: d,
                    found: v.dim(),
                })
            }
            _ => self.dim = Some(v.dim()),
        }
        Ok(self.entries.insert(key, v).is_some())
    }

    pub fn insert(&mut self, sentence: &str, v: EmbeddingVector) -> Result<bool, EmbeddingError> {
        self.insert_key(sentence_key(sentence), v)
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let mut store = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: StoreLine = serde_json::from_str(&line).map_err(|e| EmbeddingError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            if parsed.values.len() != parsed.dim {
                return Err(EmbeddingError::Parse {
                    line: lineno,
                    message: format!("dim {} but {} values", parsed.dim, parsed.values.len()),
                });
            }
            let v = EmbeddingVector::new(parsed.values, parsed.model).map_err(|e| {
                EmbeddingError::Parse {
                    line: lineno,
                    message: e.to_string(),
                }
            })?;
            if store.insert_key(parsed.key.clone(), v)? {
                log::warn!("embedding store line {lineno}: duplicate key {}, keeping the later entry", parsed.key);
            }
        }
        Ok(store)
    }

    /// Writes one JSON object per entry, sorted by key.
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), EmbeddingError> {
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort();
        for k in keys {
            let v = &self.entries[k];
            let line = StoreLine {
                key: k.clone(),
                model: v.model_id.clone(),
                dim: v.dim(),
                values: v.values.clone(),
            };
            serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// Reads a JSONL embedding store. Duplicate keys keep the last entry.
pub fn load_embedding_store(path: &Path) -> Result<EmbeddingStore, EmbeddingError> {
    EmbeddingStore::read(BufReader::new(std::fs::File::open(path)?))
}

/// Anything that can turn sentences into vectors.
pub trait Encoder: Send + Sync {
    fn model_id(&self) -> &str;

    /// One vector per sentence, in input order, all of the same dimension.
    fn embed_batch(&self, sentences: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError>;
}

pub struct FileBackend {
    model_id: String,
    store: EmbeddingStore,
}

impl FileBackend {
    pub fn new(model_id: impl Into<String>, store: EmbeddingStore) -> Self {
        Self {
            model_id: model_id.into(),
            store,
        }
    }

    pub fn open(model_id: impl Into<String>, path: &Path) -> Result<Self, EmbeddingError> {
        Ok(Self::new(model_id, load_embedding_store(path)?))
    }
}

impl Encoder for FileBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_batch(&self, sentences: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        sentences
            .iter()
            .map(|s| {
                let key = sentence_key(s);
                self.store
                    .get(&key)
                    .cloned()
                    .ok_or(EmbeddingError::MissingEmbedding(key))
            })
            .collect()
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    sentences: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    #[allow(dead_code)]
    model: String,
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct ModelsResponse {
    models: Vec<String>,
}

/// Client for an `/embed` encoder service.
pub struct HttpBackend {
    endpoint: String,
    model_id: String,
    batch_size: usize,
    max_in_flight: usize,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(
        endpoint: impl Into<String>,
        model_id: impl Into<String>,
        batch_size: usize,
    ) -> Result<Self, EmbeddingError> {
        if batch_size == 0 || batch_size > MAX_BATCH_SIZE {
            return Err(EmbeddingError::Config(format!(
                "batch_size must be in 1..={MAX_BATCH_SIZE}, got {batch_size}"
            )));
        }
        Ok(Self {
            endpoint: endpoint.into().trim_end_matches('/').to_owned(),
            model_id: model_id.into(),
            batch_size,
            max_in_flight: 4,
            agent: crate::http::agent(Duration::from_secs(300)),
        })
    }

    pub fn with_max_in_flight(mut self, cap: usize) -> Self {
        self.max_in_flight = cap.max(1);
        self
    }

    fn post_chunk(&self, chunk: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let req = EmbedRequest {
            model: &self.model_id,
            sentences: chunk,
        };
        let resp: EmbedResponse = crate::http::post_json(&self.agent, &format!("{}/embed", self.endpoint), &req)
            .map_err(|e| EmbeddingError::Transport {
                status: e.status,
                body: e.body,
            })?;
        if resp.vectors.len() != chunk.len() {
            return Err(EmbeddingError::Transport {
                status: 200,
                body: format!("expected {} vectors, got {}", chunk.len(), resp.vectors.len()),
            });
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != resp.dim {
                    return Err(EmbeddingError::DimInconsistency {
                        expected: resp.dim,
                        found: v.len(),
                    });
                }
                EmbeddingVector::new(v, self.model_id.clone())
            })
            .collect()
    }

    pub fn models(&self) -> Result<Vec<String>, EmbeddingError> {
        let r: ModelsResponse = crate::http::get_json(&self.agent, &format!("{}/models", self.endpoint))
            .map_err(|e| EmbeddingError::Transport {
                status: e.status,
                body: e.body,
            })?;
        Ok(r.models)
    }

    pub fn health(&self) -> Result<(), EmbeddingError> {
        crate::http::get_json::<serde_json::Value>(&self.agent, &format!("{}/health", self.endpoint))
            .map(|_| ())
            .map_err(|e| EmbeddingError::Transport {
                status: e.status,
                body: e.body,
            })
    }
}

impl Encoder for HttpBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_batch(&self, sentences: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let chunks: Vec<&[String]> = sentences.chunks(self.batch_size).collect();
        let results = crate::http::run_bounded(&chunks, self.max_in_flight, |c| self.post_chunk(c));
        let mut out = Vec::with_capacity(sentences.len());
        for r in results {
            out.extend(r?);
        }
        check_uniform_dim(&out)?;
        Ok(out)
    }
}

fn check_uniform_dim(vs: &[EmbeddingVector]) -> Result<(), EmbeddingError> {
    if let Some(first) = vs.first() {
        if let Some(bad) = vs.iter().find(|v| v.dim() != first.dim()) {
            return Err(EmbeddingError::DimInconsistency {
                expected: first.dim(),
                found: bad.dim(),
            });
        }
    }
    Ok(())
}
