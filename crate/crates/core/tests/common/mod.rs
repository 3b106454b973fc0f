#![allow(dead_code)]

pub mod mock;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rtqe::embedding::{sentence_key, EmbeddingStore, EmbeddingVector};
use rtqe::pipeline::PipelineConfig;

pub const CONTENT: &[&str] = &[
    "boys", "football", "guys", "sport", "phone", "broken", "iphone", "smashed", "river", "mountain", "lamp",
    "window", "garden", "coffee", "winter", "violin", "market", "engine", "letter", "forest", "castle",
    "bridge", "doctor", "island", "pencil", "orange", "silver", "thunder", "kitchen", "museum",
];
pub const FUNCTION: &[&str] = &["the", "a", "of", "and", "is", "to", "in", "it", "was", "this"];

/// A random sentence of 1..=12 words with at least one content word.
pub fn random_sentence(rng: &mut StdRng) -> String {
    let len = rng.gen_range(1..=12);
    let anchor = rng.gen_range(0..len);
    let mut words = Vec::with_capacity(len);
    for i in 0..len {
        let pool = if i == anchor || rng.gen_bool(0.6) { CONTENT } else { FUNCTION };
        let mut w = pool.choose(rng).unwrap().to_string();
        if i == 0 && rng.gen_bool(0.5) {
            w[..1].make_ascii_uppercase();
        }
        words.push(w);
    }
    let mut s = words.join(" ");
    if rng.gen_bool(0.7) {
        s.push('.');
    }
    s
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub struct Row {
    pub original: String,
    pub translation: String,
    pub z_mean: f64,
}

pub fn dataset_tsv(rows: &[Row]) -> String {
    let mut out = String::from("original\ttranslation\tscores\tmean\tz_scores\tz_mean\n");
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t[70, 80]\t75\t[{z}, {z}]\t{z}",
            r.original,
            r.translation,
            z = r.z_mean
        )
        .unwrap();
    }
    out
}

/// Records whose translation copies the original.
pub fn copied_rows(n: usize, seed: u64) -> Vec<Row> {
    let mut rng = rng(seed);
    (0..n)
        .map(|i| {
            let s = random_sentence(&mut rng);
            Row {
                original: s.clone(),
                translation: s,
                z_mean: ((i * 37) % 11) as f64 / 4.0 - 1.25,
            }
        })
        .collect()
}

/// Embedding store mapping every given sentence to the same vector.
pub fn constant_store(model: &str, sentences: impl IntoIterator<Item = String>) -> EmbeddingStore {
    let mut store = EmbeddingStore::new();
    for s in sentences {
        let v = EmbeddingVector::new(vec![0.5, -1.0, 2.0, 0.25], model).unwrap();
        store.insert_key(sentence_key(&s), v).unwrap();
    }
    store
}

pub const ALL_METRICS: &str = r#"["bleu", "chrf", "ter", "tf_cosine", "embed_cosine:const"]"#;

/// Writes dataset, constant embeddings and config for an identity-client
/// run into `dir`; output goes to `dir/out`.
pub fn identity_setup(dir: &Path, rows: &[Row]) -> PipelineConfig {
    std::fs::write(dir.join("data.tsv"), dataset_tsv(rows)).unwrap();
    let sentences = rows.iter().flat_map(|r| [r.original.clone(), r.translation.clone()]);
    constant_store("const", sentences).save(&dir.join("const.jsonl")).unwrap();
    let toml = format!(
        r#"
        output_dir = "out"
        [dataset]
        path = "data.tsv"
        source_lang = "en"
        target_lang = "de"

        [mt]
        kind = "identity"

        [[embedding]]
        model = "const"
        kind = "file"
        path = "const.jsonl"

        [metrics]
        enabled = {ALL_METRICS}
        "#
    );
    write_config(dir, &toml)
}

pub fn write_config(dir: &Path, toml: &str) -> PipelineConfig {
    let path = dir.join("config.toml");
    std::fs::write(&path, toml).unwrap();
    PipelineConfig::load(&path).unwrap()
}

pub fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn out_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.clone()
}
