//! Command-line front end for the propagation-tree toolkit.
//!
//! Six subcommands cover the workflow end to end: `ingest` converts platform
//! dumps into canonical tree JSONL, `split` writes seeded train/val/test
//! files, `bep-sample` exports masked-path learning samples, `enhance` grows
//! trees with generated comments, `eval-prop` scores generated trees against
//! originals, and `detect` trains and evaluates detectors under the general,
//! early, and cross-platform scenarios.
//!
//! Settings resolve in three layers: built-in defaults, then the optional
//! TOML file passed with `--config`, then command-line flags. Every run
//! writes the fully resolved settings as a `*.effective-config.json` file
//! next to its primary output, so any artifact can be reproduced from the
//! artifacts alone.
//!
//! Exit codes: 0 on success, 1 when the run finished but some samples failed
//! (the per-sample error list is written next to the primary output and
//! echoed to stderr as JSON) or when the run could not finish at all, and 2
//! for command-line usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use propkit::detect::{
    evaluate, truncate_early, BaselineDetector, Detector, HttpDetector, Scenario,
    SubprocessDetector,
};
use propkit::enhance::{enhance_batch, EnhanceConfig, ExhaustionPolicy, RunStatus};
use propkit::gateway::{Gateway, GatewayMode, GenConfig};
use propkit::ingest::{self, DatasetManifest, SourceFormat};
use propkit::metrics::{
    evaluate_propagation, write_csv, write_svg, Embedder, HashedBowEmbedder, LexiconSentiment,
    RemoteEmbedder, RemoteSentiment, SentimentProvider,
};
use propkit::prompt::TemplateId;
use propkit::sampler::build_samples;
use propkit::tree::{read_trees_jsonl, write_trees_jsonl};

#[derive(Parser)]
#[command(
    name = "propkit",
    version,
    about = "Propagation-tree toolkit: ingest, split, sample, enhance, evaluate, detect",
    disable_help_subcommand = true
)]
struct Cli {
    /// TOML settings file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Cap worker threads for parallel stages (default: one per CPU).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a platform dump into canonical tree JSONL plus an ingest report.
    Ingest(IngestArgs),
    /// Split canonical trees into seeded train/val/test JSONL files.
    Split(SplitArgs),
    /// Export masked traversal sub-paths as instruction/output learning samples.
    BepSample(BepSampleArgs),
    /// Grow each tree with generated comment nodes via the model gateway.
    Enhance(EnhanceArgs),
    /// Score generated trees (structure, semantics, sentiment) against originals.
    EvalProp(EvalPropArgs),
    /// Train and evaluate a fake-news detector on propagation trees.
    Detect(DetectArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Source layout: pheme_dir, weibo_json, or canonical_jsonl.
    #[arg(long, value_name = "FORMAT")]
    format: String,
    /// Dump file or directory to read.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Canonical tree JSONL to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Ingest report JSON (drop/repair bookkeeping) to write.
    #[arg(long, value_name = "FILE")]
    report: PathBuf,
    /// Dataset name for the report (default: input file stem).
    #[arg(long, value_name = "NAME")]
    name: Option<String>,
}

#[derive(Args)]
struct SplitArgs {
    /// Canonical tree JSONL to split.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Directory receiving train.jsonl, val.jsonl, and test.jsonl.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Train,val,test fractions, e.g. 0.7,0.1,0.2.
    #[arg(long, value_name = "A,B,C")]
    ratio: Option<String>,
    /// Shuffle seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Args)]
struct BepSampleArgs {
    /// Canonical tree JSONL to read.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Instruction template: P1 (structured), P2 (minimal), or P3 (detailed).
    #[arg(long, value_name = "ID")]
    template: Option<String>,
    /// Learning-sample JSONL to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct EnhanceArgs {
    /// Canonical tree JSONL to read.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Enriched tree JSONL to write (one line per input tree, same order).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Directory for per-sample generation transcripts (JSON).
    #[arg(long, value_name = "DIR")]
    transcripts: Option<PathBuf>,
    /// Number of comment nodes to generate per tree.
    #[arg(long, value_name = "N")]
    k: Option<u32>,
    /// Instruction template: P1, P2, or P3.
    #[arg(long, value_name = "ID")]
    template: Option<String>,
    /// Gateway mode: mock, live, or replay.
    #[arg(long, value_name = "MODE")]
    mode: Option<String>,
    /// Directory for recording responses (mock/live) or replaying them.
    #[arg(long, value_name = "DIR")]
    record: Option<PathBuf>,
    /// Model name sent to the endpoint and mixed into record fingerprints.
    #[arg(long, value_name = "NAME")]
    model: Option<String>,
    /// Chat-completions endpoint URL (live mode).
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,
}

#[derive(Args)]
struct EvalPropArgs {
    /// Generated (or enhanced) tree JSONL.
    #[arg(long, value_name = "FILE")]
    generated: PathBuf,
    /// Original tree JSONL for paired consistency metrics.
    #[arg(long, value_name = "FILE")]
    originals: Option<PathBuf>,
    /// Metric report JSON to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write the per-sample table as CSV.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Also render distribution histograms as SVG.
    #[arg(long, value_name = "FILE")]
    svg: Option<PathBuf>,
    /// Method label recorded in the report.
    #[arg(long, value_name = "NAME", default_value = "generated")]
    method: String,
}

#[derive(Args)]
struct DetectArgs {
    /// Labeled training trees (required unless an external adapter is used).
    #[arg(long, value_name = "FILE")]
    train: Option<PathBuf>,
    /// Labeled test trees.
    #[arg(long, value_name = "FILE")]
    test: PathBuf,
    /// Evaluation report JSON to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Scenario: general, early, or cross-platform.
    #[arg(long, value_name = "KIND", default_value = "general")]
    scenario: String,
    /// Fraction of earliest comments retained in the early scenario.
    #[arg(long, value_name = "RHO")]
    rho: Option<f64>,
    /// Enhance test trees before evaluation: none, mock, replay, or live.
    #[arg(long = "enhance", value_name = "MODE", default_value = "none")]
    enhance_mode: String,
    /// Gateway record/replay directory for the enhancement step.
    #[arg(long, value_name = "DIR")]
    record: Option<PathBuf>,
    /// Comment nodes to generate per tree when enhancing.
    #[arg(long, value_name = "N")]
    k: Option<u32>,
    /// Instruction template for the enhancement step.
    #[arg(long, value_name = "ID")]
    template: Option<String>,
    /// External detector command, e.g. "python detector.py --flag".
    #[arg(long, value_name = "CMD")]
    adapter_cmd: Option<String>,
    /// External detector HTTP endpoint.
    #[arg(long, value_name = "URL")]
    adapter_url: Option<String>,
}

// --- layered settings -------------------------------------------------------

/// Optional TOML settings file. Every field is optional; missing values fall
/// back to the library defaults, and command-line flags override everything.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    jobs: Option<usize>,
    #[serde(default)]
    gateway: GatewaySection,
    #[serde(default)]
    enhance: EnhanceSection,
    #[serde(default)]
    split: SplitSection,
    #[serde(default)]
    providers: ProviderSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GatewaySection {
    mode: Option<String>,
    model_name: Option<String>,
    endpoint_url: Option<String>,
    system_prompt: Option<String>,
    temperature: Option<f64>,
    top_p: Option<f64>,
    max_retries: Option<u32>,
    max_new_tokens: Option<u32>,
    timeout_secs: Option<u64>,
    concurrency: Option<usize>,
    record_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnhanceSection {
    k: Option<u32>,
    template: Option<String>,
    min_content_words: Option<usize>,
    max_consecutive_repeat: Option<usize>,
    rewrite_index: Option<bool>,
    abort_on_exhaustion: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitSection {
    seed: Option<u64>,
    ratio: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProviderSection {
    /// "hashed_bow" (default) or "remote_http".
    embedding: Option<String>,
    embedding_endpoint: Option<String>,
    embedding_dimensions: Option<usize>,
    /// "lexicon" (default) or "remote_http".
    sentiment: Option<String>,
    sentiment_endpoint: Option<String>,
    timeout_secs: Option<u64>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
}

fn resolve_gateway(
    file: &GatewaySection,
    mode: Option<&str>,
    record: Option<&Path>,
    model: Option<&str>,
    endpoint: Option<&str>,
) -> Result<GenConfig> {
    let mut config = GenConfig::default();
    if let Some(value) = &file.mode {
        config.mode = value.parse::<GatewayMode>().map_err(|e| anyhow!(e))?;
    }
    if let Some(value) = &file.model_name {
        config.model_name = value.clone();
    }
    if let Some(value) = &file.endpoint_url {
        config.endpoint_url = Some(value.clone());
    }
    if let Some(value) = &file.system_prompt {
        config.system_prompt = Some(value.clone());
    }
    if let Some(value) = file.temperature {
        config.temperature = value;
    }
    if let Some(value) = file.top_p {
        config.top_p = value;
    }
    if let Some(value) = file.max_retries {
        config.max_retries = value;
    }
    if let Some(value) = file.max_new_tokens {
        config.max_new_tokens = value;
    }
    if let Some(value) = file.timeout_secs {
        config.timeout_secs = value;
    }
    if let Some(value) = file.concurrency {
        config.concurrency = value;
    }
    if let Some(value) = &file.record_dir {
        config.record_dir = Some(value.clone());
    }
    if let Some(value) = mode {
        config.mode = value.parse::<GatewayMode>().map_err(|e| anyhow!(e))?;
    }
    if let Some(value) = record {
        config.record_dir = Some(value.to_path_buf());
    }
    if let Some(value) = model {
        config.model_name = value.to_string();
    }
    if let Some(value) = endpoint {
        config.endpoint_url = Some(value.to_string());
    }
    Ok(config)
}

fn resolve_enhance(
    file: &EnhanceSection,
    k: Option<u32>,
    template: Option<&str>,
) -> Result<EnhanceConfig> {
    let mut config = EnhanceConfig::default();
    if let Some(value) = file.k {
        config.k = value;
    }
    if let Some(value) = &file.template {
        config.template = value.parse::<TemplateId>().map_err(|e| anyhow!(e))?;
    }
    if let Some(value) = file.min_content_words {
        config.min_content_words = value;
    }
    if let Some(value) = file.max_consecutive_repeat {
        config.max_consecutive_repeat = value;
    }
    if let Some(value) = file.rewrite_index {
        config.rewrite_index = value;
    }
    if let Some(value) = file.abort_on_exhaustion {
        config.slot_exhaustion = if value {
            ExhaustionPolicy::Abort
        } else {
            ExhaustionPolicy::SkipAndStop
        };
    }
    if let Some(value) = k {
        config.k = value;
    }
    if let Some(value) = template {
        config.template = value.parse::<TemplateId>().map_err(|e| anyhow!(e))?;
    }
    Ok(config)
}

/// Fully resolved provider choice, recorded in effective configs.
#[derive(Debug, Serialize)]
struct ResolvedProviders {
    embedding: String,
    embedding_endpoint: Option<String>,
    embedding_dimensions: usize,
    sentiment: String,
    sentiment_endpoint: Option<String>,
    timeout_secs: u64,
}

fn resolve_providers(file: &ProviderSection) -> ResolvedProviders {
    ResolvedProviders {
        embedding: file
            .embedding
            .clone()
            .unwrap_or_else(|| "hashed_bow".into()),
        embedding_endpoint: file.embedding_endpoint.clone(),
        embedding_dimensions: file.embedding_dimensions.unwrap_or(256),
        sentiment: file.sentiment.clone().unwrap_or_else(|| "lexicon".into()),
        sentiment_endpoint: file.sentiment_endpoint.clone(),
        timeout_secs: file.timeout_secs.unwrap_or(30),
    }
}

fn build_embedder(providers: &ResolvedProviders) -> Result<Box<dyn Embedder>> {
    match providers.embedding.as_str() {
        "hashed_bow" => Ok(Box::new(HashedBowEmbedder {
            dimensions: providers.embedding_dimensions,
        })),
        "remote_http" => {
            let endpoint = providers.embedding_endpoint.as_deref().ok_or_else(|| {
                anyhow!("embedding = \"remote_http\" requires embedding_endpoint")
            })?;
            Ok(Box::new(RemoteEmbedder::new(
                endpoint,
                providers.timeout_secs,
            )?))
        }
        other => bail!("unknown embedding backend '{other}', expected hashed_bow or remote_http"),
    }
}

fn build_sentiment(providers: &ResolvedProviders) -> Result<Box<dyn SentimentProvider>> {
    match providers.sentiment.as_str() {
        "lexicon" => Ok(Box::new(LexiconSentiment)),
        "remote_http" => {
            let endpoint = providers.sentiment_endpoint.as_deref().ok_or_else(|| {
                anyhow!("sentiment = \"remote_http\" requires sentiment_endpoint")
            })?;
            Ok(Box::new(RemoteSentiment::new(
                endpoint,
                providers.timeout_secs,
            )?))
        }
        other => bail!("unknown sentiment backend '{other}', expected lexicon or remote_http"),
    }
}

// --- run bookkeeping --------------------------------------------------------

#[derive(Debug, Serialize)]
struct SampleError {
    sample_id: String,
    error: String,
}

enum Outcome {
    Clean,
    /// The run produced its outputs, but these samples failed; the list is
    /// also written next to the primary output.
    Partial(Vec<SampleError>),
}

/// `trees.jsonl` → `trees.jsonl.effective-config.json` (same directory).
fn sibling_path(primary_out: &Path, suffix: &str) -> PathBuf {
    let mut name = primary_out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    primary_out.with_file_name(name)
}

fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_effective_config<T: Serialize>(path: &Path, subcommand: &str, settings: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Envelope<'a, T> {
        subcommand: &'a str,
        settings: &'a T,
    }
    write_json_pretty(
        path,
        &Envelope {
            subcommand,
            settings,
        },
    )
}

/// Writes the per-sample error list next to the primary output (when any)
/// and turns it into the process outcome.
fn finish(primary_out: &Path, errors: Vec<SampleError>) -> Result<Outcome> {
    if errors.is_empty() {
        return Ok(Outcome::Clean);
    }
    write_json_pretty(&sibling_path(primary_out, ".errors.json"), &errors)?;
    Ok(Outcome::Partial(errors))
}

/// Runs `work` inside a thread pool capped at `jobs` threads (if given).
fn with_jobs<T: Send>(jobs: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building thread pool")?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string())
}

fn parse_ratio(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        bail!("--ratio expects three comma-separated fractions, e.g. 0.7,0.1,0.2");
    }
    let mut values = [0.0; 3];
    for (slot, part) in values.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .with_context(|| format!("invalid ratio component '{part}'"))?;
    }
    Ok((values[0], values[1], values[2]))
}

// --- subcommands -------------------------------------------------------------

fn run_ingest(args: &IngestArgs, _file: &FileConfig) -> Result<Outcome> {
    let format: SourceFormat = args.format.parse().map_err(|e: String| anyhow!(e))?;
    let name = args.name.clone().unwrap_or_else(|| file_stem(&args.input));
    let manifest = DatasetManifest::new(name, format);

    let (trees, report) = ingest::ingest(&args.input, &manifest)?;
    write_trees_jsonl(&args.out, &trees)?;
    write_json_pretty(&args.report, &report)?;

    #[derive(Serialize)]
    struct Settings<'a> {
        input: &'a Path,
        output: &'a Path,
        report: &'a Path,
        manifest: &'a DatasetManifest,
    }
    write_effective_config(
        &sibling_path(&args.out, ".effective-config.json"),
        "ingest",
        &Settings {
            input: &args.input,
            output: &args.out,
            report: &args.report,
            manifest: &manifest,
        },
    )?;

    eprintln!(
        "ingest: {} trees ({} nodes) from {} records; {} dropped, {} repaired",
        report.trees_emitted,
        report.nodes_emitted,
        report.records_seen,
        report.dropped.len(),
        report.repaired.len()
    );
    Ok(Outcome::Clean)
}

fn run_split(args: &SplitArgs, file: &FileConfig) -> Result<Outcome> {
    let trees = read_trees_jsonl(&args.input)?;

    let mut manifest = DatasetManifest::new(file_stem(&args.input), SourceFormat::CanonicalJsonl);
    if let Some(seed) = file.split.seed {
        manifest.split_seed = seed;
    }
    if let Some([a, b, c]) = file.split.ratio {
        manifest.split_ratio = (a, b, c);
    }
    if let Some(seed) = args.seed {
        manifest.split_seed = seed;
    }
    if let Some(ratio) = &args.ratio {
        manifest.split_ratio = parse_ratio(ratio)?;
    }

    let sets = ingest::split(&trees, &manifest)?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    write_trees_jsonl(args.out_dir.join("train.jsonl"), &sets.train)?;
    write_trees_jsonl(args.out_dir.join("val.jsonl"), &sets.val)?;
    write_trees_jsonl(args.out_dir.join("test.jsonl"), &sets.test)?;

    #[derive(Serialize)]
    struct Settings<'a> {
        input: &'a Path,
        out_dir: &'a Path,
        manifest: &'a DatasetManifest,
    }
    write_effective_config(
        &args.out_dir.join("split.effective-config.json"),
        "split",
        &Settings {
            input: &args.input,
            out_dir: &args.out_dir,
            manifest: &manifest,
        },
    )?;

    eprintln!(
        "split: {} train / {} val / {} test",
        sets.train.len(),
        sets.val.len(),
        sets.test.len()
    );
    Ok(Outcome::Clean)
}

fn run_bep_sample(args: &BepSampleArgs, file: &FileConfig) -> Result<Outcome> {
    let template = match args
        .template
        .as_deref()
        .or(file.enhance.template.as_deref())
    {
        Some(value) => value.parse::<TemplateId>().map_err(|e| anyhow!(e))?,
        None => TemplateId::default(),
    };

    let trees = read_trees_jsonl(&args.input)?;
    let mut samples = Vec::new();
    let mut errors = Vec::new();
    for tree in &trees {
        match build_samples(tree, template) {
            Ok(batch) => samples.extend(batch),
            Err(err) => errors.push(SampleError {
                sample_id: tree.sample_id.clone(),
                error: err.to_string(),
            }),
        }
    }
    propkit::sampler::export_samples(&samples, &args.out)?;

    #[derive(Serialize)]
    struct Settings<'a> {
        input: &'a Path,
        output: &'a Path,
        template: TemplateId,
    }
    write_effective_config(
        &sibling_path(&args.out, ".effective-config.json"),
        "bep-sample",
        &Settings {
            input: &args.input,
            output: &args.out,
            template,
        },
    )?;

    eprintln!(
        "bep-sample: {} samples from {} trees ({} trees failed)",
        samples.len(),
        trees.len(),
        errors.len()
    );
    finish(&args.out, errors)
}

fn run_enhance(args: &EnhanceArgs, file: &FileConfig, jobs: Option<usize>) -> Result<Outcome> {
    let gen_config = resolve_gateway(
        &file.gateway,
        args.mode.as_deref(),
        args.record.as_deref(),
        args.model.as_deref(),
        args.endpoint.as_deref(),
    )?;
    let enhance_config = resolve_enhance(&file.enhance, args.k, args.template.as_deref())?;
    let gateway = Gateway::new(gen_config.clone())?;

    let trees = read_trees_jsonl(&args.input)?;
    let results = with_jobs(jobs, || enhance_batch(&trees, &gateway, &enhance_config))?;

    if let Some(dir) = &args.transcripts {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let mut enriched = Vec::with_capacity(trees.len());
    let mut errors = Vec::new();
    for (tree, result) in trees.iter().zip(results) {
        match result {
            Ok((output, transcript)) => {
                if transcript.status != RunStatus::Complete {
                    errors.push(SampleError {
                        sample_id: tree.sample_id.clone(),
                        error: format!(
                            "enhancement {}: accepted {} of {} nodes",
                            serde_json::to_value(transcript.status)?
                                .as_str()
                                .unwrap_or("incomplete"),
                            transcript.accepted_nodes.len(),
                            transcript.k_target
                        ),
                    });
                }
                if let Some(dir) = &args.transcripts {
                    write_json_pretty(&dir.join(format!("{}.json", tree.sample_id)), &transcript)?;
                }
                enriched.push(output);
            }
            Err(err) => {
                errors.push(SampleError {
                    sample_id: tree.sample_id.clone(),
                    error: err.to_string(),
                });
                // Keep the pipeline runnable downstream: pass the input
                // through unchanged when a tree fails outright.
                enriched.push(tree.clone());
            }
        }
    }
    write_trees_jsonl(&args.out, &enriched)?;

    #[derive(Serialize)]
    struct Settings<'a> {
        input: &'a Path,
        output: &'a Path,
        transcripts: Option<&'a Path>,
        jobs: Option<usize>,
        gateway: &'a GenConfig,
        enhance: &'a EnhanceConfig,
    }
    write_effective_config(
        &sibling_path(&args.out, ".effective-config.json"),
        "enhance",
        &Settings {
            input: &args.input,
            output: &args.out,
            transcripts: args.transcripts.as_deref(),
            jobs,
            gateway: &gen_config,
            enhance: &enhance_config,
        },
    )?;

    eprintln!(
        "enhance: {} trees written, {} with failures",
        enriched.len(),
        errors.len()
    );
    finish(&args.out, errors)
}

fn run_eval_prop(args: &EvalPropArgs, file: &FileConfig) -> Result<Outcome> {
    let providers = resolve_providers(&file.providers);
    let embedder = build_embedder(&providers)?;
    let sentiment = build_sentiment(&providers)?;

    let generated = read_trees_jsonl(&args.generated)?;
    let originals = args.originals.as_ref().map(read_trees_jsonl).transpose()?;

    let report = evaluate_propagation(
        &generated,
        originals.as_deref(),
        embedder.as_ref(),
        sentiment.as_ref(),
        &args.method,
    )?;
    write_json_pretty(&args.out, &report)?;
    if let Some(path) = &args.csv {
        write_csv(&report, path)?;
    }
    if let Some(path) = &args.svg {
        write_svg(&report, path)?;
    }

    #[derive(Serialize)]
    struct Settings<'a> {
        generated: &'a Path,
        originals: Option<&'a Path>,
        output: &'a Path,
        csv: Option<&'a Path>,
        svg: Option<&'a Path>,
        method: &'a str,
        providers: &'a ResolvedProviders,
    }
    write_effective_config(
        &sibling_path(&args.out, ".effective-config.json"),
        "eval-prop",
        &Settings {
            generated: &args.generated,
            originals: args.originals.as_deref(),
            output: &args.out,
            csv: args.csv.as_deref(),
            svg: args.svg.as_deref(),
            method: &args.method,
            providers: &providers,
        },
    )?;

    eprintln!(
        "eval-prop: {} samples, {} warnings",
        report.sample_count,
        report.warnings.len()
    );
    Ok(Outcome::Clean)
}

fn run_detect(args: &DetectArgs, file: &FileConfig, jobs: Option<usize>) -> Result<Outcome> {
    let providers = resolve_providers(&file.providers);

    let detector: Box<dyn Detector> = if let Some(command) = &args.adapter_cmd {
        let mut parts = command.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| anyhow!("--adapter-cmd must not be empty"))?;
        let name = file_stem(Path::new(&program));
        Box::new(SubprocessDetector::new(name, program, parts.collect()))
    } else if let Some(url) = &args.adapter_url {
        Box::new(HttpDetector::new(
            "http-adapter",
            url,
            providers.timeout_secs,
        )?)
    } else {
        let train_path = args
            .train
            .as_ref()
            .ok_or_else(|| anyhow!("--train is required unless an external adapter is given"))?;
        let train = read_trees_jsonl(train_path)?;
        Box::new(BaselineDetector::train(&train)?)
    };

    let mut test = read_trees_jsonl(&args.test)?;
    let scenario = match args.scenario.as_str() {
        "general" => {
            if args.rho.is_some() {
                bail!("--rho only applies to --scenario early");
            }
            Scenario::General
        }
        "early" => {
            let rho = args
                .rho
                .ok_or_else(|| anyhow!("--scenario early requires --rho"))?;
            if !(rho > 0.0 && rho <= 1.0) {
                bail!("--rho must be in (0, 1], got {rho}");
            }
            test = test.iter().map(|tree| truncate_early(tree, rho)).collect();
            Scenario::Early { rho }
        }
        "cross-platform" | "cross_platform" => Scenario::CrossPlatform {
            source: args
                .train
                .as_deref()
                .map(file_stem)
                .unwrap_or_else(|| "external".to_string()),
            target: file_stem(&args.test),
        },
        other => bail!("unknown scenario '{other}', expected general, early, or cross-platform"),
    };

    let mut errors = Vec::new();
    let mut gateway_settings = None;
    let mut enhance_settings = None;
    if args.enhance_mode != "none" {
        let gen_config = resolve_gateway(
            &file.gateway,
            Some(args.enhance_mode.as_str()),
            args.record.as_deref(),
            None,
            None,
        )?;
        let enhance_config = resolve_enhance(&file.enhance, args.k, args.template.as_deref())?;
        let gateway = Gateway::new(gen_config.clone())?;
        let results = with_jobs(jobs, || enhance_batch(&test, &gateway, &enhance_config))?;
        let mut enhanced = Vec::with_capacity(test.len());
        for (tree, result) in test.iter().zip(results) {
            match result {
                Ok((output, _transcript)) => enhanced.push(output),
                Err(err) => {
                    errors.push(SampleError {
                        sample_id: tree.sample_id.clone(),
                        error: err.to_string(),
                    });
                    enhanced.push(tree.clone());
                }
            }
        }
        test = enhanced;
        gateway_settings = Some(gen_config);
        enhance_settings = Some(enhance_config);
    }

    let report = evaluate(detector.as_ref(), &test, &scenario.to_string())?;
    propkit::detect::write_report(&report, &args.out)?;

    #[derive(Serialize)]
    struct Settings<'a> {
        train: Option<&'a Path>,
        test: &'a Path,
        output: &'a Path,
        scenario: &'a Scenario,
        enhance_mode: &'a str,
        jobs: Option<usize>,
        detector: &'a str,
        adapter_cmd: Option<&'a str>,
        adapter_url: Option<&'a str>,
        gateway: Option<&'a GenConfig>,
        enhance: Option<&'a EnhanceConfig>,
    }
    write_effective_config(
        &sibling_path(&args.out, ".effective-config.json"),
        "detect",
        &Settings {
            train: args.train.as_deref(),
            test: &args.test,
            output: &args.out,
            scenario: &scenario,
            enhance_mode: &args.enhance_mode,
            jobs,
            detector: detector.name(),
            adapter_cmd: args.adapter_cmd.as_deref(),
            adapter_url: args.adapter_url.as_deref(),
            gateway: gateway_settings.as_ref(),
            enhance: enhance_settings.as_ref(),
        },
    )?;

    eprintln!(
        "detect: {} on {} trees, accuracy {:.4}{}",
        report.detector,
        report.evaluated,
        report.accuracy,
        report
            .auc
            .map(|auc| format!(", AUC {auc:.4}"))
            .unwrap_or_default()
    );
    finish(&args.out, errors)
}

fn run(cli: Cli) -> Result<Outcome> {
    let file = load_file_config(cli.config.as_deref())?;
    let jobs = cli.jobs.or(file.jobs);
    match &cli.command {
        Command::Ingest(args) => run_ingest(args, &file),
        Command::Split(args) => run_split(args, &file),
        Command::BepSample(args) => run_bep_sample(args, &file),
        Command::Enhance(args) => run_enhance(args, &file, jobs),
        Command::EvalProp(args) => run_eval_prop(args, &file),
        Command::Detect(args) => run_detect(args, &file, jobs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(errors)) => {
            // Machine-readable failure list on stderr; artifacts were still
            // written, including the .errors.json sibling file.
            eprintln!(
                "{}",
                serde_json::json!({
                    "partial_failure": true,
                    "failed_samples": errors,
                })
            );
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("{}", serde_json::json!({ "error": format!("{err:#}") }));
            ExitCode::from(1)
        }
    }
}
