//! Back-translation of forward translations into the source language.
//!
//! Clients: `identity` (returns its input), `file` (a TSV lookup table) and
//! `http` (the `/translate` protocol). Responses are cached per
//! `(client, from, to, sha256(text))`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{LangCode, QEDataset};

#[derive(Debug, thiserror::Error)]
pub enum TranslateError {
    #[error("transport error on texts {offset}..{end} (status {status}): {body}", end = offset + len)]
    Transport {
        offset: usize,
        len: usize,
        status: u16,
        body: String,
    },
    #[error("file client has no translation for text {hash} (input {index})")]
    FileClientMiss { index: usize, hash: String },
    #[error("client returned {got} texts for {expected}")]
    CountMismatch { expected: usize, got: usize },
    #[error("translation store line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid client configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, thiserror::Error)]
#[error("round trip failed for records {first_record}..={last_record}: {source}")]
pub struct RoundTripError {
    pub first_record: usize,
    pub last_record: usize,
    #[source]
    pub source: TranslateError,
}

pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// A machine-translation backend.
pub trait Translator: Send + Sync {
    /// Identifies the backend in cache entries and reports.
    fn client_id(&self) -> &str;

    /// One output per input, in input order.
    fn translate_batch(&self, texts: &[String], from: &LangCode, to: &LangCode) -> Result<Vec<String>, TranslateError>;
}

/// Returns its input unchanged.
#[derive(Clone, Debug, Default)]
pub struct IdentityClient;

impl Translator for IdentityClient {
    fn client_id(&self) -> &str {
        "identity"
    }

    fn translate_batch(&self, texts: &[String], _: &LangCode, _: &LangCode) -> Result<Vec<String>, TranslateError> {
        Ok(texts.to_vec())
    }
}

/// Lookup table read from `from \t to \t source \t translation` lines.
#[derive(Clone, Debug, Default)]
pub struct FileClient {
    id: String,
    table: HashMap<(String, String, String), String>,
}

impl FileClient {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            table: HashMap::new(),
        }
    }

    pub fn insert(&mut self, from: &str, to: &str, source: &str, translated: &str) {
        self.table
            .insert((from.to_owned(), to.to_owned(), text_hash(source)), translated.to_owned());
    }

    pub fn read<R: BufRead>(id: impl Into<String>, reader: R) -> Result<Self, TranslateError> {
        let mut client = Self::new(id);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(TranslateError::Parse {
                    line: i + 1,
                    message: format!("expected 4 columns, found {}", cols.len()),
                });
            }
            client.insert(cols[0], cols[1], cols[2], cols[3]);
        }
        Ok(client)
    }

    pub fn open(id: impl Into<String>, path: &Path) -> Result<Self, TranslateError> {
        Self::read(id, BufReader::new(std::fs::File::open(path)?))
    }
}

impl Translator for FileClient {
    fn client_id(&self) -> &str {
        &self.id
    }

    fn translate_batch(&self, texts: &[String], from: &LangCode, to: &LangCode) -> Result<Vec<String>, TranslateError> {
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| {
                let hash = text_hash(t);
                self.table
                    .get(&(from.to_string(), to.to_string(), hash.clone()))
                    .cloned()
                    .ok_or(TranslateError::FileClientMiss { index, hash })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 1000,
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based).
    pub fn delay(&self, attempt: u32) -> Duration {
        Duration::from_millis((self.base_delay_ms as f64 * self.factor.powi(attempt as i32)) as u64)
    }
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    from: &'a str,
    to: &'a str,
    texts: &'a [String],
}

#[derive(Deserialize)]
struct TranslateResponse {
    texts: Vec<String>,
}

/// Client for a `/translate` service.
pub struct HttpClient {
    id: String,
    endpoint: String,
    batch_size: usize,
    max_in_flight: usize,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(endpoint: impl Into<String>, batch_size: usize, retry: RetryPolicy) -> Result<Self, TranslateError> {
        if batch_size == 0 {
            return Err(TranslateError::Config("batch_size must be >= 1".into()));
        }
        let endpoint = endpoint.into().trim_end_matches('/').to_owned();
        Ok(Self {
            id: format!("http:{endpoint}"),
            endpoint,
            batch_size,
            max_in_flight: 2,
            retry,
            agent: crate::http::agent(Duration::from_secs(300)),
        })
    }

    pub fn with_max_in_flight(mut self, cap: usize) -> Self {
        self.max_in_flight = cap.max(1);
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    fn post_chunk(&self, offset: usize, chunk: &[String], from: &LangCode, to: &LangCode) -> Result<Vec<String>, TranslateError> {
        let req = TranslateRequest {
            from: from.as_str(),
            to: to.as_str(),
            texts: chunk,
        };
        let url = format!("{}/translate", self.endpoint);
        let mut attempt = 0;
        loop {
            match crate::http::post_json::<_, TranslateResponse>(&self.agent, &url, &req) {
                Ok(r) if r.texts.len() == chunk.len() => return Ok(r.texts),
                Ok(r) => {
                    return Err(TranslateError::CountMismatch {
                        expected: chunk.len(),
                        got: r.texts.len(),
                    })
                }
                Err(e) if attempt < self.retry.max_retries => {
                    let wait = self.retry.delay(attempt);
                    log::warn!("translate chunk at {offset} failed ({}: {}), retrying in {wait:?}", e.status, e.body);
                    thread::sleep(wait);
                    attempt += 1;
                }
                Err(e) => {
                    return Err(TranslateError::Transport {
                        offset,
                        len: chunk.len(),
                        status: e.status,
                        body: e.body,
                    })
                }
            }
        }
    }
}

impl Translator for HttpClient {
    fn client_id(&self) -> &str {
        &self.id
    }

    fn translate_batch(&self, texts: &[String], from: &LangCode, to: &LangCode) -> Result<Vec<String>, TranslateError> {
        let chunks: Vec<(usize, &[String])> = texts
            .chunks(self.batch_size)
            .enumerate()
            .map(|(i, c)| (i * self.batch_size, c))
            .collect();
        let results = crate::http::run_bounded(&chunks, self.max_in_flight, |(off, c)| {
            self.post_chunk(*off, c, from, to)
        });
        let mut out = Vec::with_capacity(texts.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct CacheKey {
    client: String,
    from: String,
    to: String,
    key: String,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    client: String,
    from: String,
    to: String,
    key: String,
    text: String,
}

/// Translations already fetched, keyed by client, direction and text hash.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TranslationCache {
    entries: HashMap<CacheKey, String>,
}

impl TranslationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn key(client: &str, from: &LangCode, to: &LangCode, text: &str) -> CacheKey {
        CacheKey {
            client: client.to_owned(),
            from: from.to_string(),
            to: to.to_string(),
            key: text_hash(text),
        }
    }

    pub fn get(&self, client: &str, from: &LangCode, to: &LangCode, text: &str) -> Option<&str> {
        self.entries.get(&Self::key(client, from, to, text)).map(String::as_str)
    }

    pub fn put(&mut self, client: &str, from: &LangCode, to: &LangCode, text: &str, translated: String) {
        self.entries.insert(Self::key(client, from, to, text), translated);
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, TranslateError> {
        let mut cache = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let l: CacheLine = serde_json::from_str(&line).map_err(|e| TranslateError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            cache.entries.insert(
                CacheKey {
                    client: l.client,
                    from: l.from,
                    to: l.to,
                    key: l.key,
                },
                l.text,
            );
        }
        Ok(cache)
    }

    /// Loads a JSONL cache; a missing file is an empty cache.
    pub fn load(path: &Path) -> Result<Self, TranslateError> {
        match std::fs::File::open(path) {
            Ok(f) => Self::read(BufReader::new(f)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes entries sorted by key.
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), TranslateError> {
        let mut keys: Vec<&CacheKey> = self.entries.keys().collect();
        keys.sort();
        for k in keys {
            let line = CacheLine {
                client: k.client.clone(),
                from: k.from.clone(),
                to: k.to.clone(),
                key: k.key.clone(),
                text: self.entries[k].clone(),
            };
            serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), TranslateError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultSource {
    Cache,
    Fresh,
}

impl std::fmt::Display for ResultSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResultSource::Cache => "cache",
            ResultSource::Fresh => "fresh",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RoundTripResult {
    pub record_id: usize,
    pub back_translation: String,
    pub source: ResultSource,
    pub client_id: String,
    /// The client returned an empty string.
    pub empty: bool,
}

/// Translates every record's forward translation back into the source
/// language. The cache is consulted first and fresh responses are written
/// back to it.
pub fn round_trip(
    client: &dyn Translator,
    ds: &QEDataset,
    cache: &mut TranslationCache,
) -> Result<Vec<RoundTripResult>, RoundTripError> {
    let pair = ds.language_pair();
    let (from, to) = (&pair.target, &pair.source);
    let id = client.client_id();

    let mut out: Vec<Option<RoundTripResult>> = vec![None; ds.len()];
    let mut pending_idx = Vec::new();
    let mut pending_text = Vec::new();
    for (i, r) in ds.records().iter().enumerate() {
        match cache.get(id, from, to, &r.translation) {
            Some(t) => out[i] = Some(make_result(r.id, t.to_owned(), ResultSource::Cache, id)),
            None => {
                pending_idx.push(i);
                pending_text.push(r.translation.clone());
            }
        }
    }

    if !pending_text.is_empty() {
        let record_id = |pos: usize| ds.records()[pending_idx[pos]].id;
        let translated = client.translate_batch(&pending_text, from, to).map_err(|e| {
            let (lo, hi) = match &e {
                TranslateError::Transport { offset, len, .. } => (*offset, offset + len - 1),
                TranslateError::FileClientMiss { index, .. } => (*index, *index),
                _ => (0, pending_idx.len() - 1),
            };
            RoundTripError {
                first_record: record_id(lo),
                last_record: record_id(hi.min(pending_idx.len() - 1)),
                source: e,
            }
        })?;
        if translated.len() != pending_text.len() {
            return Err(RoundTripError {
                first_record: record_id(0),
                last_record: record_id(pending_idx.len() - 1),
                source: TranslateError::CountMismatch {
                    expected: pending_text.len(),
                    got: translated.len(),
                },
            });
        }
        for ((i, src), t) in pending_idx.iter().zip(&pending_text).zip(translated) {
            cache.put(id, from, to, src, t.clone());
            out[*i] = Some(make_result(ds.records()[*i].id, t, ResultSource::Fresh, id));
        }
    }
    Ok(out.into_iter().map(|r| r.expect("every record resolved")).collect())
}

fn make_result(record_id: usize, back_translation: String, source: ResultSource, client: &str) -> RoundTripResult {
    let empty = back_translation.trim().is_empty();
    if empty {
        log::warn!("record {record_id}: empty back-translation");
    }
    RoundTripResult {
        record_id,
        back_translation,
        source,
        client_id: client.to_owned(),
        empty,
    }
}
