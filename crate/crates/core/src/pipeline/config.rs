use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::dataset::{LangCode, LanguagePair, ParseMode};
use crate::embedding::MAX_BATCH_SIZE;
use crate::metrics::{BleuConfig, ChrfConfig, MetricId};
use crate::roundtrip::RetryPolicy;

/// Full pipeline configuration, read from a TOML file.
///
/// Relative paths are resolved against the directory holding the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Where stage outputs and the run manifest go.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub mt: MtConfig,
    #[serde(default, rename = "embedding")]
    pub embeddings: Vec<EmbeddingConfig>,
    pub metrics: MetricsConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub source_lang: LangCode,
    pub target_lang: LangCode,
    #[serde(default)]
    pub mode: ParseMode,
}

impl DatasetConfig {
    pub fn language_pair(&self) -> LanguagePair {
        LanguagePair::new(self.source_lang.clone(), self.target_lang.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MtKind {
    #[default]
    Identity,
    File,
    Http,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MtConfig {
    pub kind: MtKind,
    /// Translation table for the `file` client.
    pub path: Option<PathBuf>,
    /// Base URL for the `http` client.
    pub endpoint: Option<String>,
    pub batch_size: usize,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    /// Persistent JSONL translation cache.
    pub cache: Option<PathBuf>,
}

impl Default for MtConfig {
    fn default() -> Self {
        Self {
            kind: MtKind::Identity,
            path: None,
            endpoint: None,
            batch_size: 32,
            retry: RetryPolicy::default(),
            max_in_flight: 2,
            cache: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    File,
    Http,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub model: String,
    pub kind: EmbeddingKind,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_embed_batch")]
    pub batch_size: usize,
    #[serde(default = "default_embed_in_flight")]
    pub max_in_flight: usize,
}

fn default_embed_batch() -> usize {
    64
}

fn default_embed_in_flight() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub enabled: Vec<String>,
    #[serde(default)]
    pub bleu: BleuConfig,
    #[serde(default)]
    pub chrf: ChrfConfig,
    /// Replacement stopword list, one word per line.
    #[serde(default)]
    pub stopwords: Option<PathBuf>,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.output_dir);
        resolve(base, &mut self.dataset.path);
        for p in [&mut self.mt.path, &mut self.mt.cache, &mut self.metrics.stopwords]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        for e in &mut self.embeddings {
            if let Some(p) = &mut e.path {
                resolve(base, p);
            }
        }
    }

    /// Parsed, sorted and de-duplicated metric ids.
    pub fn metric_ids(&self) -> Result<Vec<MetricId>, PipelineError> {
        let mut ids = self
            .metrics
            .enabled
            .iter()
            .map(|s| s.parse::<MetricId>().map_err(|e| PipelineError::Config(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        ids.sort();
        ids.dedup();
        Ok(ids)
    }

    /// Checks everything that can be checked without touching backends.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg_err = |m: String| Err(PipelineError::Config(m));
        let ids = self.metric_ids()?;
        if ids.is_empty() {
            return cfg_err("no metrics enabled".into());
        }
        self.metrics.bleu.validate().map_err(PipelineError::Config)?;
        self.metrics.chrf.validate().map_err(PipelineError::Config)?;
        for id in &ids {
            if let MetricId::EmbedCosine(m) = id {
                if !self.embeddings.iter().any(|e| &e.model == m) {
                    return cfg_err(format!("metric {id} has no [[embedding]] backend for model `{m}`"));
                }
            }
        }
        let mut models: Vec<&str> = self.embeddings.iter().map(|e| e.model.as_str()).collect();
        models.sort();
        if models.windows(2).any(|w| w[0] == w[1]) {
            return cfg_err("duplicate [[embedding]] model ids".into());
        }
        for e in &self.embeddings {
            if e.model.is_empty() {
                return cfg_err("embedding model id is empty".into());
            }
            if e.batch_size == 0 || e.batch_size > MAX_BATCH_SIZE {
                return cfg_err(format!("embedding {}: batch_size must be in 1..={MAX_BATCH_SIZE}", e.model));
            }
            match e.kind {
                EmbeddingKind::File if e.path.is_none() => {
                    return cfg_err(format!("embedding {}: file backend needs `path`", e.model))
                }
                EmbeddingKind::Http if e.endpoint.is_none() => {
                    return cfg_err(format!("embedding {}: http backend needs `endpoint`", e.model))
                }
                _ => {}
            }
        }
        if self.mt.batch_size == 0 {
            return cfg_err("mt batch_size must be >= 1".into());
        }
        match self.mt.kind {
            MtKind::File if self.mt.path.is_none() => return cfg_err("file MT client needs `path`".into()),
            MtKind::Http if self.mt.endpoint.is_none() => {
                return cfg_err("http MT client needs `endpoint`".into())
            }
            _ => {}
        }
        if !self.dataset.path.is_file() {
            return cfg_err(format!("dataset {} does not exist", self.dataset.path.display()));
        }
        Ok(())
    }
}
