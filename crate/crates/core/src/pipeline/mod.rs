//! End-to-end driver: ingest, round-trip, embed, score, correlate, report.
//!
//! Every stage writes its outputs under the run's output directory and
//! records a key derived from its configuration and the key of the stage
//! before it (`stages.json`). A stage is reused when its key matches, its
//! outputs still exist and nothing upstream was recomputed in this run.

mod config;
pub mod files;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    DatasetConfig, EmbeddingConfig, EmbeddingKind, MetricsConfig, MtConfig, MtKind, PipelineConfig,
};

use crate::analysis::{self, correlate, group_distribution, z_normalize, CorrelationReport, FailureFlags};
use crate::dataset::{parse_qe_tsv, IngestError, ParseMode, QEDataset};
use crate::embedding::{
    cosine_similarity, EmbeddingError, EmbeddingStore, Encoder, FileBackend, HttpBackend,
};
use crate::metrics::{chrf, config_hash, sentence_bleu, ter, tf_cosine_with, MetricId, MetricScore};
use crate::roundtrip::{
    round_trip, FileClient, HttpClient, IdentityClient, RoundTripError, TranslateError, TranslationCache,
    Translator,
};
use crate::text::{tokenize, Scheme, Stopwords};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit code: 1 config, 2 data, 3 backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data(_) | PipelineError::Io(_) => 2,
            PipelineError::Backend(_) => 3,
        }
    }
}

impl From<IngestError> for PipelineError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(e) => PipelineError::Io(e),
            e => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<EmbeddingError> for PipelineError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::Transport { .. } | EmbeddingError::DimInconsistency { .. } => {
                PipelineError::Backend(e.to_string())
            }
            EmbeddingError::Config(m) => PipelineError::Config(m),
            EmbeddingError::Io(e) => PipelineError::Io(e),
            e => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<TranslateError> for PipelineError {
    fn from(e: TranslateError) -> Self {
        match e {
            TranslateError::Transport { .. } | TranslateError::CountMismatch { .. } => {
                PipelineError::Backend(e.to_string())
            }
            TranslateError::Config(m) => PipelineError::Config(m),
            TranslateError::Io(e) => PipelineError::Io(e),
            e => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<RoundTripError> for PipelineError {
    fn from(e: RoundTripError) -> Self {
        let range = format!("records {}..={}: ", e.first_record, e.last_record);
        match PipelineError::from(e.source) {
            PipelineError::Backend(m) => PipelineError::Backend(range + &m),
            PipelineError::Data(m) => PipelineError::Data(range + &m),
            other => other,
        }
    }
}

impl From<analysis::AnalysisError> for PipelineError {
    fn from(e: analysis::AnalysisError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Roundtrip,
    Embed,
    Score,
    Correlate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Roundtrip,
        Stage::Embed,
        Stage::Score,
        Stage::Correlate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Roundtrip => "roundtrip",
            Stage::Embed => "embed",
            Stage::Score => "score",
            Stage::Correlate => "correlate",
            Stage::Report => "report",
        }
    }
}

pub const DATASET_FILE: &str = "dataset.tsv";
pub const VALIDATION_FILE: &str = "validation.jsonl";
pub const ROUNDTRIP_FILE: &str = "roundtrips.tsv";
pub const SCORES_FILE: &str = "scores.tsv";
pub const FLAGS_FILE: &str = "flags.tsv";
pub const CORRELATION_JSON: &str = "correlation.json";
pub const CORRELATION_TSV: &str = "correlation.tsv";
pub const Z_SCORES_FILE: &str = "z_scores.tsv";
pub const DIST_FAILED_FORWARD: &str = "distribution_failed_forward.csv";
pub const DIST_CODE_SWITCHED: &str = "distribution_code_switched.csv";
pub const DISTRIBUTIONS_JSON: &str = "distributions.json";
pub const INSPECTION_FILE: &str = "inspection.tsv";
pub const REPORT_FILE: &str = "report.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
const STATE_FILE: &str = "stages.json";

/// Records listed in the inspection file for disagreeing with the humans.
const DISAGREEMENT_LISTING: usize = 20;

/// File name for a model's embedding store under `embeddings/`.
pub fn embedding_file(model: &str) -> String {
    let safe: String = model
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    format!("embeddings/{safe}.jsonl")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Computed,
    Reused,
    Failed,
}

impl std::fmt::Display for StageStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StageStatus::Computed => "computed",
            StageStatus::Reused => "reused",
            StageStatus::Failed => "failed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub status: StageStatus,
    pub records: usize,
    pub outputs: Vec<String>,
}

/// Summary of one pipeline invocation, written to `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub started_at: String,
    pub finished_at: String,
    pub stages: Vec<StageOutcome>,
    pub warnings: Vec<String>,
    /// Config hash of every enabled metric.
    pub metric_configs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub completed: bool,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn stage(&self, s: Stage) -> Option<&StageOutcome> {
        self.stages.iter().find(|o| o.stage == s)
    }

    pub fn all_reused(&self) -> bool {
        self.stages.iter().all(|s| s.status == StageStatus::Reused)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
struct StageRecord {
    key: String,
    records: usize,
    outputs: Vec<String>,
}

fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(&h.finalize()[..16])
}

fn file_digest(path: &Path) -> Result<String, PipelineError> {
    Ok(digest(&[&std::fs::read(path)?]))
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("config serializes")
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    metric_ids: Vec<MetricId>,
    out: PathBuf,
    state: BTreeMap<Stage, StageRecord>,
    manifest: RunManifest,
    upstream_changed: bool,
    prev_key: String,
    warnings: BTreeMap<String, usize>,
}

impl<'a> Run<'a> {
    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn write(&self, rel: &str, contents: &str) -> Result<(), PipelineError> {
        let p = self.path(rel);
        if let Some(d) = p.parent() {
            std::fs::create_dir_all(d)?;
        }
        std::fs::write(p, contents)?;
        Ok(())
    }

    fn warn(&mut self, msg: String) {
        *self.warnings.entry(msg).or_insert(0) += 1;
    }

    fn save_state(&self) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(&self.state).expect("state serializes");
        self.write(STATE_FILE, &text)
    }

    /// Runs `body` unless the stage can be reused. `body` returns the
    /// number of records it produced.
    fn stage<F>(&mut self, stage: Stage, config: &[u8], outputs: Vec<String>, body: F) -> Result<(), PipelineError>
    where
        F: FnOnce(&mut Self) -> Result<usize, PipelineError>,
    {
        let key = digest(&[stage.name().as_bytes(), self.prev_key.as_bytes(), config]);
        self.prev_key = key.clone();
        let reusable = !self.upstream_changed
            && self.state.get(&stage).is_some_and(|r| r.key == key)
            && outputs.iter().all(|o| self.path(o).is_file());
        if reusable {
            log::info!("stage {}: reusing previous outputs", stage.name());
            let records = self.state[&stage].records;
            self.manifest.stages.push(StageOutcome {
                stage,
                status: StageStatus::Reused,
                records,
                outputs,
            });
            return Ok(());
        }
        log::info!("stage {}: computing", stage.name());
        self.state.remove(&stage);
        match body(self) {
            Ok(records) => {
                self.upstream_changed = true;
                self.state.insert(
                    stage,
                    StageRecord {
                        key,
                        records,
                        outputs: outputs.clone(),
                    },
                );
                self.save_state()?;
                self.manifest.stages.push(StageOutcome {
                    stage,
                    status: StageStatus::Computed,
                    records,
                    outputs,
                });
                Ok(())
            }
            Err(e) => {
                self.save_state()?;
                self.manifest.stages.push(StageOutcome {
                    stage,
                    status: StageStatus::Failed,
                    records: 0,
                    outputs: Vec::new(),
                });
                Err(e)
            }
        }
    }

    fn dataset(&self) -> Result<QEDataset, PipelineError> {
        let f = std::fs::File::open(self.path(DATASET_FILE))?;
        Ok(parse_qe_tsv(f, self.cfg.dataset.language_pair(), ParseMode::Strict)?.0)
    }

    fn ingest(&mut self) -> Result<(), PipelineError> {
        let d = &self.cfg.dataset;
        let cfg = [json(&(d.source_lang.as_str(), d.target_lang.as_str(), d.mode)), file_digest(&d.path)?.into_bytes()].concat();
        let outputs = vec![DATASET_FILE.to_owned(), VALIDATION_FILE.to_owned()];
        self.stage(Stage::Ingest, &cfg, outputs, |run| {
            let d = &run.cfg.dataset;
            let f = std::fs::File::open(&d.path)?;
            let (ds, report) = parse_qe_tsv(f, d.language_pair(), d.mode)?;
            if ds.is_empty() {
                return Err(PipelineError::Data("no records accepted from the dataset".into()));
            }
            if report.rejected_count > 0 {
                run.warn(format!("ingest: {} malformed rows skipped", report.rejected_count));
            }
            run.write(DATASET_FILE, &ds.to_tsv())?;
            run.write(VALIDATION_FILE, &report.to_jsonl())?;
            Ok(ds.len())
        })
    }

    fn translator(&self) -> Result<Box<dyn Translator>, PipelineError> {
        let mt = &self.cfg.mt;
        Ok(match mt.kind {
            MtKind::Identity => Box::new(IdentityClient),
            MtKind::File => {
                let path = mt.path.as_ref().expect("validated");
                Box::new(FileClient::open(format!("file:{}", path.display()), path)?)
            }
            MtKind::Http => Box::new(
                HttpClient::new(mt.endpoint.clone().expect("validated"), mt.batch_size, mt.retry.clone())?
                    .with_max_in_flight(mt.max_in_flight),
            ),
        })
    }

    fn roundtrip(&mut self) -> Result<(), PipelineError> {
        let mt = &self.cfg.mt;
        let table = match (&mt.kind, &mt.path) {
            (MtKind::File, Some(p)) => file_digest(p)?,
            _ => String::new(),
        };
        let cfg = json(&(mt.kind, &mt.endpoint, &mt.path, table));
        self.stage(Stage::Roundtrip, &cfg, vec![ROUNDTRIP_FILE.to_owned()], |run| {
            let ds = run.dataset()?;
            let client = run.translator()?;
            let cache_path = run.cfg.mt.cache.clone();
            let mut cache = match &cache_path {
                Some(p) => TranslationCache::load(p)?,
                None => TranslationCache::new(),
            };
            let results = round_trip(client.as_ref(), &ds, &mut cache)?;
            if let Some(p) = &cache_path {
                cache.save(p)?;
            }
            for r in results.iter().filter(|r| r.empty) {
                run.warn(format!("roundtrip: empty back-translation (record {})", r.record_id));
            }
            run.write(ROUNDTRIP_FILE, &files::write_roundtrips(&results))?;
            Ok(results.len())
        })
    }

    fn encoder(e: &EmbeddingConfig) -> Result<Box<dyn Encoder>, PipelineError> {
        Ok(match e.kind {
            EmbeddingKind::File => Box::new(FileBackend::open(&e.model, e.path.as_ref().expect("validated"))?),
            EmbeddingKind::Http => Box::new(
                HttpBackend::new(e.endpoint.clone().expect("validated"), &e.model, e.batch_size)?
                    .with_max_in_flight(e.max_in_flight),
            ),
        })
    }

    fn embed(&mut self) -> Result<(), PipelineError> {
        let mut cfg = Vec::new();
        for e in &self.cfg.embeddings {
            cfg.extend(json(&(&e.model, e.kind, &e.endpoint, &e.path)));
            if let Some(p) = &e.path {
                cfg.extend(file_digest(p)?.into_bytes());
            }
        }
        let outputs = self.cfg.embeddings.iter().map(|e| embedding_file(&e.model)).collect();
        self.stage(Stage::Embed, &cfg, outputs, |run| {
            let ds = run.dataset()?;
            let back = files::read_roundtrips(&run.path(ROUNDTRIP_FILE), ds.len())?;
            let mut seen = BTreeSet::new();
            let sentences: Vec<String> = ds
                .records()
                .iter()
                .map(|r| &r.original)
                .chain(&back)
                .filter(|s| !s.trim().is_empty() && seen.insert(s.as_str()))
                .cloned()
                .collect();
            for e in &run.cfg.embeddings {
                let encoder = Self::encoder(e)?;
                let vectors = encoder.embed_batch(&sentences)?;
                let mut store = EmbeddingStore::new();
                for (s, v) in sentences.iter().zip(vectors) {
                    store.insert(s, v)?;
                }
                let p = run.path(&embedding_file(&e.model));
                std::fs::create_dir_all(p.parent().expect("nested path"))?;
                store.save(&p)?;
            }
            Ok(sentences.len())
        })
    }

    fn score(&mut self) -> Result<(), PipelineError> {
        let m = &self.cfg.metrics;
        let stop = match &m.stopwords {
            Some(p) => file_digest(p)?,
            None => String::new(),
        };
        let cfg = json(&(&self.metric_ids.iter().map(|i| i.to_string()).collect::<Vec<_>>(), &m.bleu, &m.chrf, stop));
        let outputs = vec![SCORES_FILE.to_owned(), FLAGS_FILE.to_owned()];
        self.stage(Stage::Score, &cfg, outputs, |run| {
            let ds = run.dataset()?;
            let back = files::read_roundtrips(&run.path(ROUNDTRIP_FILE), ds.len())?;
            let stopwords = match &run.cfg.metrics.stopwords {
                Some(p) => Stopwords::load(p)?,
                None => Stopwords::english().clone(),
            };
            let mut stores = BTreeMap::new();
            for id in &run.metric_ids {
                if let MetricId::EmbedCosine(model) = id {
                    let p = run.path(&embedding_file(model));
                    stores.insert(model.clone(), crate::embedding::load_embedding_store(&p)?);
                }
            }

            let ids = run.metric_ids.clone();
            let mut rows = Vec::with_capacity(ds.len() * ids.len());
            let mut flags = Vec::with_capacity(ds.len());
            for (r, bt) in ds.records().iter().zip(&back) {
                for id in &ids {
                    let value = run.score_one(id, &r.original, bt, &stopwords, &stores)?;
                    rows.push((r.id, id.to_string(), value));
                }
                flags.push(FailureFlags::compute(r.id, &r.original, &r.translation));
            }
            run.write(SCORES_FILE, &files::write_scores(&rows))?;
            run.write(FLAGS_FILE, &files::write_flags(&flags))?;
            Ok(ds.len())
        })
    }

    fn score_one(
        &mut self,
        id: &MetricId,
        original: &str,
        back: &str,
        stopwords: &Stopwords,
        stores: &BTreeMap<String, EmbeddingStore>,
    ) -> Result<f64, PipelineError> {
        let m = &self.cfg.metrics;
        let score: MetricScore = match id {
            MetricId::Bleu => sentence_bleu(&tokenize(back, Scheme::Simple), &tokenize(original, Scheme::Simple), &m.bleu),
            MetricId::Chrf => chrf(back, original, &m.chrf),
            MetricId::Ter => ter(&tokenize(back, Scheme::Simple), &tokenize(original, Scheme::Simple)),
            MetricId::TfCosine => tf_cosine_with(original, back, stopwords),
            MetricId::EmbedCosine(model) => {
                let store = &stores[model];
                let lookup = |s: &str| {
                    store
                        .get_sentence(s)
                        .ok_or_else(|| PipelineError::Data(format!("no {model} embedding for `{s}`")))
                };
                if back.trim().is_empty() || original.trim().is_empty() {
                    self.warn(format!("{id}: empty sentence scored 0"));
                    return Ok(0.0);
                }
                return match cosine_similarity(lookup(original)?, lookup(back)?) {
                    Ok(s) => Ok(s.value),
                    Err(EmbeddingError::ZeroVector) => {
                        self.warn(format!("{id}: zero vector scored 0"));
                        Ok(0.0)
                    }
                    Err(e) => Err(e.into()),
                };
            }
        };
        if let Some(w) = &score.warning {
            self.warn(format!("{id}: {w}"));
        }
        Ok(score.value)
    }

    fn correlate(&mut self) -> Result<(), PipelineError> {
        let outputs = vec![CORRELATION_JSON.to_owned(), CORRELATION_TSV.to_owned()];
        self.stage(Stage::Correlate, b"", outputs, |run| {
            let ds = run.dataset()?;
            let cols = files::read_scores(&run.path(SCORES_FILE), ds.len())?;
            let report = correlate(&ds, &cols)?;
            for (m, r) in &report.per_metric {
                if r.is_none() {
                    run.warn(format!("correlate: correlation of {m} with human scores is undefined"));
                }
            }
            run.write(CORRELATION_JSON, &report.to_json())?;
            run.write(CORRELATION_TSV, &report.to_tsv())?;
            Ok(report.n)
        })
    }

    fn report(&mut self) -> Result<(), PipelineError> {
        let outputs = [
            Z_SCORES_FILE,
            DIST_FAILED_FORWARD,
            DIST_CODE_SWITCHED,
            DISTRIBUTIONS_JSON,
            INSPECTION_FILE,
            REPORT_FILE,
        ]
        .map(str::to_owned)
        .to_vec();
        self.stage(Stage::Report, b"", outputs, |run| {
            let ds = run.dataset()?;
            let n = ds.len();
            let back = files::read_roundtrips(&run.path(ROUNDTRIP_FILE), n)?;
            let cols = files::read_scores(&run.path(SCORES_FILE), n)?;
            let flags = files::read_flags(&run.path(FLAGS_FILE), n)?;
            let report: CorrelationReport = serde_json::from_str(&std::fs::read_to_string(run.path(CORRELATION_JSON))?)
                .map_err(|e| PipelineError::Data(format!("{CORRELATION_JSON}: {e}")))?;
            let human: Vec<f64> = ds.records().iter().map(|r| r.z_mean).collect();

            // z-scores of each metric over all records of this run
            let mut zcols: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
            let mut zs = String::from("record_id\tmetric_id\tz\n");
            for (metric, col) in &cols {
                let present: Vec<(usize, f64)> =
                    col.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v))).collect();
                let values: Vec<f64> = present.iter().map(|p| p.1).collect();
                let mut zcol = vec![None; n];
                if let Ok(z) = z_normalize(&values) {
                    if z.degenerate {
                        run.warn(format!("report: {metric} is constant; z-scores are all 0"));
                    }
                    for ((i, _), v) in present.iter().zip(z.values) {
                        zcol[*i] = Some(v);
                    }
                }
                for (i, v) in zcol.iter().enumerate() {
                    if let Some(v) = v {
                        writeln!(zs, "{i}\t{metric}\t{v}").unwrap();
                    }
                }
                zcols.insert(metric.clone(), zcol);
            }
            run.write(Z_SCORES_FILE, &zs)?;

            let ff: Vec<bool> = flags.iter().map(|f| f.0).collect();
            let cs: Vec<bool> = flags.iter().map(|f| f.1).collect();
            let dist_ff = group_distribution(&human, &ff)?;
            let dist_cs = group_distribution(&human, &cs)?;
            run.write(DIST_FAILED_FORWARD, &dist_ff.to_csv())?;
            run.write(DIST_CODE_SWITCHED, &dist_cs.to_csv())?;
            let mut dists = BTreeMap::new();
            dists.insert("failed_forward", &dist_ff);
            dists.insert("code_switched", &dist_cs);
            run.write(DISTRIBUTIONS_JSON, &serde_json::to_string_pretty(&dists).expect("serializes"))?;

            run.write(INSPECTION_FILE, &inspection(&ds, &back, &flags, &zcols, &run.metric_ids))?;
            run.write(REPORT_FILE, &summary(&report, &dist_ff, &dist_cs))?;
            Ok(n)
        })
    }
}

/// Metric whose z-scores drive the disagreement listing: the first
/// embedding metric, else the first metric.
fn primary_metric(ids: &[MetricId]) -> Option<String> {
    ids.iter().find(|i| i.is_embedding()).or_else(|| ids.first()).map(|i| i.to_string())
}

fn inspection(
    ds: &QEDataset,
    back: &[String],
    flags: &[(bool, bool)],
    zcols: &BTreeMap<String, Vec<Option<f64>>>,
    ids: &[MetricId],
) -> String {
    let primary = primary_metric(ids);
    let primary_z = primary.as_ref().and_then(|p| zcols.get(p));
    let mut reasons: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (i, (ff, cs)) in flags.iter().enumerate() {
        if *ff {
            reasons.entry(i).or_default().push("failed_forward");
        }
        if *cs {
            reasons.entry(i).or_default().push("code_switched");
        }
    }
    if let Some(z) = primary_z {
        let mut gaps: Vec<(f64, usize)> = ds
            .records()
            .iter()
            .filter_map(|r| z[r.id].map(|v| ((r.z_mean - v).abs(), r.id)))
            .collect();
        gaps.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, i) in gaps.into_iter().take(DISAGREEMENT_LISTING) {
            reasons.entry(i).or_default().push("disagreement");
        }
    }

    let mut out = String::from("record_id\treasons\thuman_z\tmetric_z\toriginal\ttranslation\tback_translation\n");
    for (i, why) in reasons {
        let r = &ds.records()[i];
        let mz = primary_z.and_then(|z| z[i]).map_or_else(|| "NA".to_owned(), |v| format!("{v:.4}"));
        writeln!(
            out,
            "{i}\t{}\t{}\t{mz}\t{}\t{}\t{}",
            why.join(","),
            r.z_mean,
            files::escape(&r.original),
            files::escape(&r.translation),
            files::escape(&back[i])
        )
        .unwrap();
    }
    out
}

fn summary(report: &CorrelationReport, ff: &analysis::GroupDistribution, cs: &analysis::GroupDistribution) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "undefined".to_owned(), |v| format!("{v:.4}"));
    let mut out = format!("records: {}\n\nPearson r against human z-mean\n", report.n);
    for (m, r) in &report.per_metric {
        writeln!(out, "  {m:<28} {}", cell(*r)).unwrap();
    }
    for (name, d) in [("failed forward translation", ff), ("code switching", cs)] {
        writeln!(
            out,
            "\n{name}: {} flagged (mean human z {}), {} unflagged (mean human z {})",
            d.flagged.count,
            cell(d.flagged.mean),
            d.unflagged.count,
            cell(d.unflagged.mean)
        )
        .unwrap();
    }
    out
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Runs all stages.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    run_pipeline_until(cfg, Stage::Report)
}

/// Runs stages in order up to and including `last`, reusing what it can.
///
/// Config errors abort before any work. A failing stage still writes a
/// manifest that records how far the run got.
pub fn run_pipeline_until(cfg: &PipelineConfig, last: Stage) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let metric_ids = cfg.metric_ids()?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out)
        .map_err(|e| PipelineError::Config(format!("output directory {}: {e}", out.display())))?;
    let probe = out.join(".write-probe");
    std::fs::write(&probe, b"")
        .and_then(|_| std::fs::remove_file(&probe))
        .map_err(|e| PipelineError::Config(format!("output directory {} is not writable: {e}", out.display())))?;

    let state = std::fs::read_to_string(out.join(STATE_FILE))
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok())
        .unwrap_or_default();
    let metric_configs = metric_ids
        .iter()
        .map(|id| {
            let h = match id {
                MetricId::Bleu => config_hash(&cfg.metrics.bleu),
                MetricId::Chrf => config_hash(&cfg.metrics.chrf),
                MetricId::Ter => config_hash("ter:greedy-shift"),
                MetricId::TfCosine => config_hash(&("tf_cosine", &cfg.metrics.stopwords)),
                MetricId::EmbedCosine(m) => config_hash(&cfg.embeddings.iter().find(|e| &e.model == m)),
            };
            (id.to_string(), h)
        })
        .collect();
    let mut run = Run {
        cfg,
        metric_ids,
        out,
        state,
        manifest: RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            config_hash: config_hash(cfg),
            started_at: now(),
            finished_at: String::new(),
            stages: Vec::new(),
            warnings: Vec::new(),
            metric_configs,
            outputs: Vec::new(),
            completed: false,
            error: None,
        },
        upstream_changed: false,
        prev_key: String::new(),
        warnings: BTreeMap::new(),
    };

    let mut result = Ok(());
    for stage in Stage::ALL.into_iter().filter(|s| *s <= last) {
        result = match stage {
            Stage::Ingest => run.ingest(),
            Stage::Roundtrip => run.roundtrip(),
            Stage::Embed => run.embed(),
            Stage::Score => run.score(),
            Stage::Correlate => run.correlate(),
            Stage::Report => run.report(),
        };
        if result.is_err() {
            break;
        }
    }

    let mut manifest = run.manifest;
    manifest.warnings = run
        .warnings
        .into_iter()
        .map(|(w, n)| if n > 1 { format!("{w} (x{n})") } else { w })
        .collect();
    manifest.outputs = manifest.stages.iter().flat_map(|s| s.outputs.clone()).collect();
    manifest.completed = result.is_ok();
    manifest.error = result.as_ref().err().map(|e| e.to_string());
    manifest.finished_at = now();
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(run.out.join(MANIFEST_FILE), text)?;
    result.map(|_| manifest)
}

/// Scores one sentence pair with the given metrics. `encoder` is needed
/// only for `embed_cosine:<model>` and must serve that model.
pub fn score_pair(
    a: &str,
    b: &str,
    metrics: &[MetricId],
    encoder: Option<&dyn Encoder>,
) -> Result<Vec<MetricScore>, PipelineError> {
    let (ta, tb) = (tokenize(a, Scheme::Simple), tokenize(b, Scheme::Simple));
    metrics
        .iter()
        .map(|id| {
            Ok(match id {
                MetricId::Bleu => sentence_bleu(&tb, &ta, &Default::default()),
                MetricId::Chrf => chrf(b, a, &Default::default()),
                MetricId::Ter => ter(&tb, &ta),
                MetricId::TfCosine => tf_cosine_with(a, b, Stopwords::english()),
                MetricId::EmbedCosine(model) => {
                    let enc = encoder.filter(|e| e.model_id() == model).ok_or_else(|| {
                        PipelineError::Config(format!("{id} needs an embedding backend serving `{model}`"))
                    })?;
                    let v = enc.embed_batch(&[a.to_owned(), b.to_owned()])?;
                    let s = cosine_similarity(&v[0], &v[1])?;
                    MetricScore {
                        metric_id: id.to_string(),
                        value: s.value,
                        scale: crate::metrics::Scale::SignedUnit,
                        config_hash: config_hash(model),
                        warning: None,
                    }
                }
            })
        })
        .collect()
}
