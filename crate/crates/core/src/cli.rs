//! The `concept-forge` command line.
//!
//! Every command reads and validates all of its inputs and computes its
//! results before creating the `--out` directory, so a failing run leaves
//! no partial output. Errors are reported on stderr as a single JSON object
//! `{"error": kind, "message": text}`; usage errors exit with status 2, data
//! errors with status 1.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::{DistanceMetric, Linkage, DEFAULT_MAX_ITER, DEFAULT_SAMPLE_CAP};
use crate::concept::{
    build_concept_embeddings, read_wic_gold, read_wic_tsv, wic_evaluate, wic_noun_pairs,
    ConceptEmbeddingTable,
};
use crate::corpus::{
    apply_annotations, corpus_stats, load_corpus, make_dev_split, make_synon_split, read_annotations_jsonl, Corpus,
    GoldClusterings, OccurrenceRecord, SplitName, SplitSpec, DEFAULT_DEV_FRACTION,
    DEFAULT_MIN_OCCURRENCES,
};
use crate::eval::evaluate_partition;
use crate::pipeline::{
    agglo_grid, baseline_lemmas_partition, baseline_oracle_wsi_partition, induce, nu_range,
    sweep, validate_constraints, ClusterArtifact, GlobalAlgorithm, LocalAlgorithm, Mode,
    PipelineConfig,
};
use crate::store::EmbeddingStore;
use crate::{Error, Result};

/// Environment variable consulted when `--threads` is not given.
pub const THREADS_ENV: &str = "CONCEPT_FORGE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "concept-forge", version, about = "Concept induction from contextual embeddings")]
pub struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, env = THREADS_ENV, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an embedding file and write the filtered binary store.
    Ingest(IngestArgs),
    /// Corpus statistics on a split.
    Stats(StatsArgs),
    /// Run local, global or bi-level concept induction.
    Induce(InduceArgs),
    /// Score a clustering (or a baseline) against the gold annotation.
    Evaluate(EvaluateArgs),
    /// Grid search on the dev split.
    Sweep(SweepArgs),
    /// Score the same-concept classifier on a Word-in-Context dataset.
    Wic(WicArgs),
    /// Write the concept embedding table of a clustering.
    ExportEmbeddings(ExportArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Embedding store (binary or JSONL).
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Gold annotations as JSONL occurrence records.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Lemmas with fewer occurrences are dropped.
    #[arg(long)]
    pub min_occurrences: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, default_value = "full")]
    pub split: SplitName,
    /// Fraction of gold concepts drawn into the dev split.
    #[arg(long, default_value_t = DEFAULT_DEV_FRACTION)]
    pub dev_fraction: f64,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Binary store or JSONL records with vectors.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub min_occurrences: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Pipeline settings shared by `induce` and `sweep`. Every flag overrides
/// the same key of `--config`.
#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// TOML file with any of: mode, local, global, metric, seed,
    /// sample_cap, max_iter, min_occurrences.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<Mode>,
    /// `agglo:<linkage>:nu=<v>`, `kmeans:k=<n>` or `identity`.
    #[arg(long)]
    pub local: Option<LocalAlgorithm>,
    /// `agglo:<linkage>:nu=<v>`, `kmeans:pi=<p>` or `none`.
    #[arg(long)]
    pub global: Option<GlobalAlgorithm>,
    #[arg(long)]
    pub metric: Option<DistanceMetric>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest number of pairwise distances used exactly by the threshold
    /// rule; larger sets are sampled.
    #[arg(long)]
    pub sample_cap: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InduceArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Lemmas,
    OracleWsi,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// clusters.json written by `induce`.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    pub pred: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Seed of the dev split draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, default_value = "dev")]
    pub split: SplitName,
    #[arg(long, default_value_t = DEFAULT_DEV_FRACTION)]
    pub dev_fraction: f64,
    /// TOML file listing `[[config]]` tables with `local` and `global`.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// `start:end:step` for the local threshold factor.
    #[arg(long, default_value = "-4:8:0.5", allow_hyphen_values = true)]
    pub local_nu: String,
    /// `start:end:step` for the global threshold factor.
    #[arg(long, default_value = "-4:8:0.5", allow_hyphen_values = true)]
    pub global_nu: String,
    /// Linkages to try (each used on both levels).
    #[arg(long, value_delimiter = ',', default_value = "average")]
    pub linkages: Vec<Linkage>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WicArgs {
    /// Concept table written by `export-embeddings`.
    #[arg(long, required_unless_present = "pred")]
    pub table: Option<PathBuf>,
    /// Build the table from this clustering (needs `--store`).
    #[arg(long, conflicts_with = "table", requires = "store")]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// WiC data file (tab-separated).
    #[arg(long)]
    pub data: PathBuf,
    /// WiC gold file (`T` / `F` lines).
    #[arg(long)]
    pub labels: PathBuf,
    /// Store with vectors `wic-<i>-a` and `wic-<i>-b` for item `i`.
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mode: Option<Mode>,
    pub local: Option<LocalAlgorithm>,
    pub global: Option<GlobalAlgorithm>,
    pub metric: Option<DistanceMetric>,
    pub seed: Option<u64>,
    pub sample_cap: Option<usize>,
    pub max_iter: Option<usize>,
    pub min_occurrences: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    config: Vec<GridEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridEntry {
    local: LocalAlgorithm,
    global: GlobalAlgorithm,
}

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// What a run read and wrote; enough to repeat it.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn digests(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serialises");
    bytes.push(b'\n');
    bytes
}

/// Output files held in memory until every computation has succeeded.
enum Payload {
    Bytes(Vec<u8>),
    Store(EmbeddingStore),
}

struct Outcome {
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    files: Vec<(&'static str, Payload)>,
    /// Printed to stdout.
    summary: Option<Vec<u8>>,
}

impl Outcome {
    fn new(inputs: Vec<PathBuf>) -> Self {
        Outcome {
            config: serde_json::Value::Null,
            seed: None,
            inputs,
            files: Vec::new(),
            summary: None,
        }
    }
}

fn read_config_file(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Merges `--config` with the flags (flags win) and reconciles `--mode`
/// with the algorithm choices.
pub fn resolve_pipeline(args: &PipelineArgs) -> Result<(PipelineConfig, Option<usize>)> {
    let file = match &args.config {
        Some(path) => read_config_file(path)?,
        None => ConfigFile::default(),
    };
    let reference = PipelineConfig::bilevel_agglo_reference();
    let mode = args.mode.or(file.mode);
    let mut local = args.local.or(file.local);
    let mut global = args.global.or(file.global);
    match mode {
        Some(Mode::GlobalOnly) => {
            if local.is_some_and(|l| l != LocalAlgorithm::Identity) {
                return Err(Error::InvalidParameter(
                    "global-only mode takes no local algorithm".into(),
                ));
            }
            local = Some(LocalAlgorithm::Identity);
        }
        Some(Mode::LocalOnly) => {
            if global.is_some_and(|g| g != GlobalAlgorithm::None) {
                return Err(Error::InvalidParameter(
                    "local-only mode takes no global algorithm".into(),
                ));
            }
            global = Some(GlobalAlgorithm::None);
        }
        Some(Mode::Bilevel) | None => {}
    }
    let config = PipelineConfig {
        local: local.unwrap_or(reference.local),
        global: global.unwrap_or(reference.global),
        metric: args.metric.or(file.metric).unwrap_or_default(),
        seed: args.seed.or(file.seed).unwrap_or(0),
        sample_cap: args.sample_cap.or(file.sample_cap).unwrap_or(DEFAULT_SAMPLE_CAP),
        max_iter: args.max_iter.or(file.max_iter).unwrap_or(DEFAULT_MAX_ITER),
    };
    if let Some(m) = mode {
        if config.mode() != m {
            return Err(Error::InvalidParameter(format!(
                "--mode {m} conflicts with local={} global={}",
                config.local, config.global
            )));
        }
    }
    config.validate()?;
    Ok((config, file.min_occurrences))
}

struct Inputs {
    corpus: Corpus,
    store: Option<EmbeddingStore>,
    gold: GoldClusterings,
    paths: Vec<PathBuf>,
}

fn open_annotations(path: &Path) -> Result<Vec<OccurrenceRecord>> {
    read_annotations_jsonl(BufReader::new(File::open(path)?))
}

/// Builds the corpus from the store (or, without one, from the gold file).
/// Gold annotations in `--gold` override those carried by the store.
fn load_inputs(args: &CorpusArgs, min_occurrences: Option<usize>) -> Result<Inputs> {
    let min_occ = args
        .min_occurrences
        .or(min_occurrences)
        .unwrap_or(DEFAULT_MIN_OCCURRENCES);
    let mut paths = Vec::new();
    let annotations = match &args.gold {
        Some(path) => {
            paths.push(path.clone());
            Some(open_annotations(path)?)
        }
        None => None,
    };
    let (corpus, store) = match &args.store {
        Some(path) => {
            paths.insert(0, path.clone());
            let store = EmbeddingStore::open(path)?;
            let mut records = store.occurrence_records();
            if let Some(ann) = &annotations {
                apply_annotations(&mut records, ann);
            }
            let corpus = load_corpus(records, min_occ)?;
            let store = store.restrict_to_corpus(&corpus)?;
            (corpus, Some(store))
        }
        None => match annotations {
            Some(ann) => (load_corpus(ann, min_occ)?, None),
            None => {
                return Err(Error::InvalidParameter(
                    "either --store or --gold is required".into(),
                ))
            }
        },
    };
    let gold = GoldClusterings::from_corpus(&corpus);
    Ok(Inputs {
        corpus,
        store,
        gold,
        paths,
    })
}

fn require_store(inputs: &Inputs) -> Result<&EmbeddingStore> {
    inputs
        .store
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("--store is required".into()))
}

fn require_gold(gold: &GoldClusterings) -> Result<()> {
    if gold.is_empty() {
        return Err(Error::MissingAnnotation(
            "no occurrence carries a gold concept".into(),
        ));
    }
    Ok(())
}

fn make_split(gold: &GoldClusterings, name: SplitName, fraction: f64, seed: u64) -> Result<SplitSpec> {
    match name {
        SplitName::Full => Ok(SplitSpec::full(gold)),
        SplitName::Dev => make_dev_split(gold, fraction, seed),
        SplitName::Synon => Ok(make_synon_split(gold)),
    }
}

fn read_artifact(path: &Path) -> Result<ClusterArtifact> {
    ClusterArtifact::read_json(BufReader::new(File::open(path)?))
}

fn cmd_ingest(args: &IngestArgs) -> Result<Outcome> {
    let store = EmbeddingStore::open(&args.input)?;
    let corpus = load_corpus(
        store.occurrence_records(),
        args.min_occurrences.unwrap_or(DEFAULT_MIN_OCCURRENCES),
    )?;
    let store = store.restrict_to_corpus(&corpus)?;
    let mut out = Outcome::new(vec![args.input.clone()]);
    out.summary = Some(to_json_bytes(&serde_json::json!({
        "records": store.len(),
        "lemmas": corpus.lemma_count(),
        "dim": store.dim(),
    })));
    out.files.push(("store.ciem", Payload::Store(store)));
    Ok(out)
}

fn cmd_stats(args: &StatsArgs) -> Result<Outcome> {
    let inputs = load_inputs(&args.corpus, None)?;
    require_gold(&inputs.gold)?;
    let seed = args.seed.unwrap_or(0);
    let split = make_split(&inputs.gold, args.split.split, args.split.dev_fraction, seed)?;
    let report = corpus_stats(&inputs.corpus, &inputs.gold, &split);
    let bytes = to_json_bytes(&report);
    let mut out = Outcome::new(inputs.paths);
    out.seed = Some(seed);
    out.summary = Some(bytes.clone());
    out.files.push(("stats.json", Payload::Bytes(bytes)));
    Ok(out)
}

fn cmd_induce(args: &InduceArgs) -> Result<Outcome> {
    let (config, min_occ) = resolve_pipeline(&args.pipeline)?;
    let mut paths = args.pipeline.config.iter().cloned().collect::<Vec<_>>();
    let inputs = load_inputs(&args.corpus, min_occ)?;
    let store = require_store(&inputs)?;
    let output = induce(&inputs.corpus, store, &config)?;
    validate_constraints(&inputs.corpus, &output.senses, &output.concepts)?;
    let artifact = ClusterArtifact::from_output(&output, &inputs.corpus, &config);
    let summary = serde_json::json!({
        "mode": config.mode(),
        "senses": output.senses.sense_count(),
        "concepts": output.concepts.p(),
        "occurrences": output.concepts.len(),
    });
    paths.extend(inputs.paths);
    let mut out = Outcome::new(paths);
    out.config = serde_json::to_value(&config).expect("configuration serialises");
    out.seed = Some(config.seed);
    out.summary = Some(to_json_bytes(&summary));
    out.files.push(("clusters.json", Payload::Bytes(to_json_bytes(&artifact))));
    Ok(out)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<Outcome> {
    let inputs = load_inputs(&args.corpus, None)?;
    require_gold(&inputs.gold)?;
    let split = make_split(&inputs.gold, args.split.split, args.split.dev_fraction, args.seed)?;
    let mut paths = inputs.paths.clone();
    let (system, concepts) = match (&args.pred, args.baseline) {
        (Some(path), _) => {
            paths.push(path.clone());
            let artifact = read_artifact(path)?;
            let system = artifact
                .config
                .get("local")
                .zip(artifact.config.get("global"))
                .map(|(l, g)| format!("local={} global={}", l.as_str().unwrap_or("?"), g.as_str().unwrap_or("?")))
                .unwrap_or_else(|| path.display().to_string());
            (system, artifact.concept_partition()?)
        }
        (None, Some(Baseline::Lemmas)) => ("lemmas".to_string(), baseline_lemmas_partition(&inputs.corpus)),
        (None, Some(Baseline::OracleWsi)) => (
            "oracle-wsi".to_string(),
            baseline_oracle_wsi_partition(&inputs.corpus, &inputs.gold)?,
        ),
        (None, None) => return Err(Error::InvalidParameter("--pred or --baseline is required".into())),
    };
    let report = evaluate_partition(&inputs.corpus, &inputs.gold, &concepts, &split, &system, args.beta)?;
    let bytes = to_json_bytes(&report);
    let mut out = Outcome::new(paths);
    out.seed = Some(args.seed);
    out.summary = Some(bytes.clone());
    out.files.push(("metrics.json", Payload::Bytes(bytes)));
    Ok(out)
}

fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Parse(format!("bad range {spec:?}")))?;
    match nums.as_slice() {
        [v] => Ok(vec![*v]),
        [a, b, s] => nu_range(*a, *b, *s),
        _ => Err(Error::Parse(format!("range {spec:?} must be <value> or <start>:<end>:<step>"))),
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<Outcome> {
    let (base, min_occ) = resolve_pipeline(&args.pipeline)?;
    let mut paths = args.pipeline.config.iter().cloned().collect::<Vec<_>>();
    let grid = match &args.grid {
        Some(path) => {
            paths.push(path.clone());
            let text = fs::read_to_string(path)?;
            let file: GridFile =
                toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            file.config
                .into_iter()
                .map(|e| PipelineConfig {
                    local: e.local,
                    global: e.global,
                    ..base.clone()
                })
                .collect()
        }
        None => agglo_grid(
            &parse_range(&args.local_nu)?,
            &parse_range(&args.global_nu)?,
            &args.linkages,
            &base,
        ),
    };
    let inputs = load_inputs(&args.corpus, min_occ)?;
    require_gold(&inputs.gold)?;
    let store = require_store(&inputs)?;
    let split = make_split(&inputs.gold, args.split, args.dev_fraction, base.seed)?;
    let outcome = sweep(&inputs.corpus, store, &inputs.gold, &split, &grid)?;
    let best = induce(&inputs.corpus, store, &outcome.best)?;
    let artifact = ClusterArtifact::from_output(&best, &inputs.corpus, &outcome.best);
    let report = evaluate_partition(
        &inputs.corpus,
        &inputs.gold,
        &best.concepts,
        &split,
        &outcome.best.label(),
        1.0,
    )?;
    paths.extend(inputs.paths);
    let mut out = Outcome::new(paths);
    out.config = serde_json::to_value(&outcome.best).expect("configuration serialises");
    out.seed = Some(base.seed);
    out.summary = Some(to_json_bytes(&serde_json::json!({
        "best_index": outcome.best_index,
        "best": outcome.best.label(),
        "score": outcome.leaderboard[outcome.best_index].score,
        "grid_size": grid.len(),
    })));
    out.files.push(("sweep.json", Payload::Bytes(to_json_bytes(&outcome))));
    out.files.push(("clusters.json", Payload::Bytes(to_json_bytes(&artifact))));
    out.files.push(("metrics.json", Payload::Bytes(to_json_bytes(&report))));
    Ok(out)
}

fn table_from_clusters(pred: &Path, store: &Path) -> Result<ConceptEmbeddingTable> {
    let artifact = read_artifact(pred)?;
    let store = EmbeddingStore::open(store)?;
    build_concept_embeddings(&store, &artifact.concept_partition()?)
}

fn cmd_wic(args: &WicArgs) -> Result<Outcome> {
    let mut paths = Vec::new();
    let table = match (&args.table, &args.pred, &args.store) {
        (Some(t), _, _) => {
            paths.push(t.clone());
            ConceptEmbeddingTable::from_store(&EmbeddingStore::open(t)?)?
        }
        (None, Some(p), Some(s)) => {
            paths.extend([p.clone(), s.clone()]);
            table_from_clusters(p, s)?
        }
        _ => return Err(Error::InvalidParameter("--table or --pred with --store is required".into())),
    };
    paths.extend([args.data.clone(), args.labels.clone(), args.vectors.clone()]);
    let records = read_wic_tsv(BufReader::new(File::open(&args.data)?))?;
    let labels = read_wic_gold(BufReader::new(File::open(&args.labels)?))?;
    let vectors = EmbeddingStore::open(&args.vectors)?;
    let pairs = wic_noun_pairs(&records, &labels, &vectors)?;
    let accuracy = wic_evaluate(&pairs, &table)?;
    let bytes = to_json_bytes(&serde_json::json!({
        "items": records.len(),
        "noun_items": pairs.len(),
        "concepts": table.len(),
        "accuracy": accuracy,
    }));
    let mut out = Outcome::new(paths);
    out.summary = Some(bytes.clone());
    out.files.push(("metrics.json", Payload::Bytes(bytes)));
    Ok(out)
}

fn cmd_export(args: &ExportArgs) -> Result<Outcome> {
    let table = table_from_clusters(&args.pred, &args.store)?;
    let mut out = Outcome::new(vec![args.pred.clone(), args.store.clone()]);
    out.summary = Some(to_json_bytes(&serde_json::json!({
        "concepts": table.len(),
        "dim": table.dim(),
    })));
    out.files.push(("concepts.ciem", Payload::Store(table.to_store()?)));
    Ok(out)
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Stats(_) => "stats",
            Command::Induce(_) => "induce",
            Command::Evaluate(_) => "evaluate",
            Command::Sweep(_) => "sweep",
            Command::Wic(_) => "wic",
            Command::ExportEmbeddings(_) => "export-embeddings",
        }
    }

    fn out_dir(&self) -> Option<&Path> {
        match self {
            Command::Ingest(a) => Some(&a.out),
            Command::Stats(a) => a.out.as_deref(),
            Command::Induce(a) => Some(&a.out),
            Command::Evaluate(a) => a.out.as_deref(),
            Command::Sweep(a) => Some(&a.out),
            Command::Wic(a) => a.out.as_deref(),
            Command::ExportEmbeddings(a) => Some(&a.out),
        }
    }

    fn execute(&self) -> Result<Outcome> {
        match self {
            Command::Ingest(a) => cmd_ingest(a),
            Command::Stats(a) => cmd_stats(a),
            Command::Induce(a) => cmd_induce(a),
            Command::Evaluate(a) => cmd_evaluate(a),
            Command::Sweep(a) => cmd_sweep(a),
            Command::Wic(a) => cmd_wic(a),
            Command::ExportEmbeddings(a) => cmd_export(a),
        }
    }
}

fn write_outputs(dir: &Path, outcome: &Outcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, payload) in &outcome.files {
        let path = dir.join(name);
        match payload {
            Payload::Bytes(bytes) => fs::write(&path, bytes)?,
            Payload::Store(store) => {
                store.save(&path)?;
            }
        }
        written.push(path);
    }
    Ok(written)
}

/// Runs a parsed command line; returns the process exit status.
pub fn run(cli: &Cli, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| cli.command.execute())?;

    if let Some(dir) = cli.command.out_dir() {
        let written = write_outputs(dir, &outcome)?;
        let manifest = RunManifest {
            command: cli.command.name().to_string(),
            argv: argv.to_vec(),
            config: outcome.config.clone(),
            seed: outcome.seed,
            inputs: digests(&outcome.inputs)?,
            outputs: digests(&written)?,
            started_unix,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        };
        fs::write(dir.join("manifest.json"), to_json_bytes(&manifest))?;
    }
    if let Some(summary) = &outcome.summary {
        let stdout = std::io::stdout();
        let mut lock = BufWriter::new(stdout.lock());
        lock.write_all(summary)?;
        lock.flush()?;
    }
    Ok(())
}

/// Parses `argv` and runs it. Usage errors give 2, data errors 1.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let printable: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli, &printable) {
        Ok(()) => 0,
        Err(e) => {
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{body}");
            1
        }
    }
}
