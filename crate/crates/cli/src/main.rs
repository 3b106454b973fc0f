use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rtqe::embedding::{Encoder, FileBackend, HttpBackend};
use rtqe::metrics::MetricId;
use rtqe::pipeline::{run_pipeline_until, score_pair, PipelineConfig, PipelineError, RunManifest, Stage};

/// Reference-free translation quality estimation by round-trip translation.
#[derive(Parser, Debug)]
#[command(name = "rtqe", version)]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate the dataset.
    Ingest,
    /// Back-translate every record (runs ingest first if needed).
    Roundtrip,
    /// Embed originals and back-translations with every configured backend.
    Embed,
    /// Score each record with the enabled metrics and compute failure flags.
    Score,
    /// Correlate metric scores with human z-means.
    Correlate,
    /// Write z-scores, flag distributions and the inspection listing.
    Report,
    /// Run all stages.
    Run,
    /// Score a single sentence pair and print `metric<TAB>value` lines.
    ScorePair(ScorePairArgs),
}

#[derive(Args, Debug)]
struct ScorePairArgs {
    /// First sentence (the original).
    a: String,
    /// Second sentence (the back-translation).
    b: String,
    /// Comma-separated metrics.
    #[arg(long, short, value_delimiter = ',', default_value = "bleu,chrf,ter,tf_cosine")]
    metrics: Vec<String>,
    /// Embedding service endpoint for embed_cosine:<model>.
    #[arg(long, value_name = "URL", conflicts_with = "embed_file")]
    embed_endpoint: Option<String>,
    /// Precomputed embedding store (JSONL) for embed_cosine:<model>.
    #[arg(long, value_name = "PATH")]
    embed_file: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| PipelineError::Config("--config is required for this command".into()))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn print_manifest(m: &RunManifest) {
    for s in &m.stages {
        println!("{:<10} {:<8} {} records", s.stage.name(), s.status, s.records);
    }
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
}

fn cmd_score_pair(args: &ScorePairArgs) -> Result<(), PipelineError> {
    let ids = args
        .metrics
        .iter()
        .map(|m| m.trim().parse::<MetricId>().map_err(|e| PipelineError::Config(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let model = ids.iter().find_map(|i| match i {
        MetricId::EmbedCosine(m) => Some(m.clone()),
        _ => None,
    });
    if ids.iter().filter(|i| i.is_embedding()).count() > 1 {
        return Err(PipelineError::Config("score-pair supports one embedding model at a time".into()));
    }
    let encoder: Option<Box<dyn Encoder>> = match (&model, &args.embed_endpoint, &args.embed_file) {
        (None, _, _) => None,
        (Some(m), Some(url), _) => Some(Box::new(HttpBackend::new(url.clone(), m, 2)?)),
        (Some(m), None, Some(path)) => Some(Box::new(FileBackend::open(m, path)?)),
        (Some(m), None, None) => {
            return Err(PipelineError::Config(format!(
                "embed_cosine:{m} needs --embed-endpoint or --embed-file"
            )))
        }
    };
    for s in score_pair(&args.a, &args.b, &ids, encoder.as_deref())? {
        println!("{s}");
        if let Some(w) = &s.warning {
            eprintln!("warning: {}: {w}", s.metric_id);
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let last = match &cli.command {
        Command::ScorePair(args) => return cmd_score_pair(args),
        Command::Ingest => Stage::Ingest,
        Command::Roundtrip => Stage::Roundtrip,
        Command::Embed => Stage::Embed,
        Command::Score => Stage::Score,
        Command::Correlate => Stage::Correlate,
        Command::Report | Command::Run => Stage::Report,
    };
    let cfg = load_config(cli)?;
    let manifest = run_pipeline_until(&cfg, last)?;
    print_manifest(&manifest);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
