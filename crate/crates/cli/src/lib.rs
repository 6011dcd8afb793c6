//! Command-line front end: corpus preparation, training, detection,
//! evaluation, explanation retrieval, PCA export and batch-size sweeps.
//!
//! Exit codes: 0 success, 1 configuration or checkpoint problem, 2 data
//! problem, 3 training diverged.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use contravul::corpus::{self, CorpusError, CorpusFormat, CorpusSplit, DedupMode, FunctionRecord, Label};
use contravul::encoder::{load_checkpoint, save_checkpoint, EncoderError};
use contravul::eval::{self, EvalError, PR_AUC_METHOD};
use contravul::experiment::{self, SweepError};
use contravul::explain::{CueExtractor, ExplainError, KnowledgeBase};
use contravul::synthetic::{self, SyntheticConfig};
use contravul::trainer::{self, PairingStrategy, TrainError, TrainingConfig};
use contravul::{seed, ClassifierHead, EncoderModel};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const FIXED_FILE: &str = "fixed.json";
pub const PCA_FILE: &str = "pca.csv";
pub const DIVERGED_FILE: &str = "last_finite.bin";

#[derive(Debug, Parser)]
#[command(name = "contravul", version, about = "Contrastive vulnerability detection with explanation retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic corpus of vulnerable/fixed pairs and clean functions.
    Synth(SynthArgs),
    /// Deduplicate a corpus and write stratified train/valid/test splits.
    Ingest(IngestArgs),
    /// Train an encoder and classifier head.
    Train(TrainArgs),
    /// Classify one function.
    Detect(DetectArgs),
    /// Score a checkpoint on a split.
    Evaluate(EvaluateArgs),
    /// Rank explanations from a Q&A knowledge base for one function.
    Explain(ExplainArgs),
    /// Export a class-balanced 2-D PCA projection of embeddings.
    Viz(VizArgs),
    /// Train once per batch size and tabulate the results.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrainOverrides {
    /// Flat JSON training config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<PairingStrategy>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long = "lambda")]
    pub lambda: Option<f64>,
}

fn parse_strategy(s: &str) -> Result<PairingStrategy, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub pairs: usize,
    #[arg(long, default_value_t = 500)]
    pub clean: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupArg {
    None,
    Exact,
    Whitespace,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = DedupArg::Exact)]
    pub dedup: DedupArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus file (split with the seed) or a directory written by `ingest`.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// File holding the function's source text.
    #[arg(long)]
    pub function: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Directory for the run manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitArg {
    Train,
    Valid,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus file (split with the seed) or a directory written by `ingest`.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Seed used to split a corpus file; must match the training run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub include_fixed: bool,
    #[arg(long)]
    pub include_pca: bool,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Posts file (JSON lines).
    #[arg(long)]
    pub kb: PathBuf,
    #[arg(long)]
    pub function: PathBuf,
    /// Posts retrieved before answer ranking.
    #[arg(long, default_value_t = contravul::explain::DEFAULT_K_POSTS)]
    pub k: usize,
    /// Explanations returned.
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, default_value_t = contravul::explain::DEFAULT_MIN_SIM)]
    pub min_sim: f64,
    /// Directory for the run manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Seed for splitting and for subsampling the larger class.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = experiment::DEFAULT_BATCH_SIZES.to_vec())]
    pub batch_sizes: Vec<usize>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

/// Failure classes, one exit code each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    Config(String),
    Data(String),
    Diverged(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Data(_) => 2,
            Failure::Diverged(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Data(m) | Failure::Diverged(m) => m,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.message())
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn corpus_failure(e: CorpusError) -> Failure {
    Failure::Data(e.to_string())
}

fn checkpoint_failure(path: &Path, e: EncoderError) -> Failure {
    Failure::Config(format!("checkpoint {}: {e}", path.display()))
}

fn train_failure(e: TrainError) -> Failure {
    match e {
        TrainError::InvalidConfig(m) => Failure::Config(format!("invalid training config: {m}")),
        TrainError::DivergedLoss { epoch, step, .. } => {
            Failure::Diverged(format!("loss diverged at epoch {epoch}, step {step}"))
        }
        other => Failure::Data(other.to_string()),
    }
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::Prediction(t) => train_failure(t),
        other => Failure::Data(other.to_string()),
    }
}

fn explain_failure(e: ExplainError) -> Failure {
    Failure::Data(format!("knowledge base: {e}"))
}

/// Provenance written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the resolved configuration's canonical JSON bytes.
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
}

fn timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn config_hash<T: Serialize>(resolved: &T) -> String {
    let bytes = serde_json::to_vec(resolved).expect("configs serialise");
    hex::encode(Sha256::digest(&bytes))
}

struct Run {
    command: &'static str,
    started_at: String,
}

impl Run {
    fn start(command: &'static str) -> Self {
        Self {
            command,
            started_at: timestamp(),
        }
    }

    fn finish<T: Serialize>(self, dir: &Path, resolved: &T, seed: u64) -> Result<RunManifest, Failure> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            config_hash: config_hash(resolved),
            seed,
            tool_version: TOOL_VERSION.to_string(),
            started_at: self.started_at,
            finished_at: timestamp(),
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("outputs serialise");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| io_failure(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row).expect("rows serialise");
        w.write_all(b"\n").map_err(|e| io_failure(path, e))?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

/// Defaults, then the config file, then explicit flags.
pub fn resolve_config(o: &TrainOverrides) -> Result<TrainingConfig, Failure> {
    let mut cfg = match &o.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("config {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Config(format!("config {}: {e}", path.display())))?
        }
        None => TrainingConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(s) = o.strategy {
        cfg.strategy = s;
    }
    if let Some(b) = o.batch_size {
        cfg.batch_size = b;
    }
    if let Some(l) = o.lambda {
        cfg.lambda_contrastive = l;
    }
    cfg.validate().map_err(train_failure)?;
    Ok(cfg)
}

pub const SPLIT_FILES: [&str; 3] = ["train.jsonl", "valid.jsonl", "test.jsonl"];

/// A directory produced by `ingest` is read as-is; a file is split with
/// `seed`.
pub fn load_split(path: &Path, seed: u64) -> Result<CorpusSplit, Failure> {
    if path.is_dir() {
        let read = |name: &str| corpus::load_corpus(&path.join(name), CorpusFormat::JsonLines).map_err(corpus_failure);
        Ok(CorpusSplit {
            train: read(SPLIT_FILES[0])?,
            valid: read(SPLIT_FILES[1])?,
            test: read(SPLIT_FILES[2])?,
            dropped: Vec::new(),
            seed,
        })
    } else {
        let records = corpus::load_corpus(path, CorpusFormat::JsonLines).map_err(corpus_failure)?;
        corpus::build_splits(&records, seed).map_err(corpus_failure)
    }
}

fn select(split: CorpusSplit, which: SplitArg) -> Vec<FunctionRecord> {
    match which {
        SplitArg::Train => split.train,
        SplitArg::Valid => split.valid,
        SplitArg::Test => split.test,
        SplitArg::All => split.train.into_iter().chain(split.valid).chain(split.test).collect(),
    }
}

fn load_model(path: &Path) -> Result<(EncoderModel, ClassifierHead), Failure> {
    let ckpt = load_checkpoint(path).map_err(|e| checkpoint_failure(path, e))?;
    let head = ckpt
        .head
        .ok_or_else(|| Failure::Config(format!("checkpoint {} has no classifier head", path.display())))?;
    Ok((ckpt.model, head))
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code; results go to `stdout`, diagnostics to `stderr`.
pub fn run_from<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    match run(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(stderr, "error: {f}");
            f.exit_code()
        }
    }
}

pub fn run(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Ingest(a) => cmd_ingest(&a, stdout),
        Command::Train(a) => cmd_train(&a, stdout, stderr),
        Command::Detect(a) => cmd_detect(&a, stdout),
        Command::Evaluate(a) => cmd_evaluate(&a, stdout),
        Command::Explain(a) => cmd_explain(&a, stdout, stderr),
        Command::Viz(a) => cmd_viz(&a),
        Command::Sweep(a) => cmd_sweep(&a, stdout),
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), Failure> {
    let run = Run::start("synth");
    let records = synthetic::generate(SyntheticConfig {
        pairs: a.pairs,
        clean: a.clean,
        seed: a.seed,
    });
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    corpus::write_corpus(&a.out, &records).map_err(|e| io_failure(&a.out, e))?;
    let dir = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let resolved = serde_json::json!({"pairs": a.pairs, "clean": a.clean, "seed": a.seed});
    run.finish(dir, &resolved, a.seed)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    kept: usize,
    duplicates_removed: Vec<String>,
    downsampled: Vec<String>,
    train: usize,
    valid: usize,
    test: usize,
    stats: corpus::CorpusStats,
}

pub fn cmd_ingest(a: &IngestArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let run = Run::start("ingest");
    let mut records = corpus::load_corpus(&a.corpus, CorpusFormat::JsonLines).map_err(corpus_failure)?;
    let removed = match a.dedup {
        DedupArg::None => Vec::new(),
        DedupArg::Exact => corpus::dedup_by_content(&mut records, DedupMode::Exact),
        DedupArg::Whitespace => corpus::dedup_by_content(&mut records, DedupMode::NormalizedWhitespace),
    };
    let split = corpus::build_splits(&records, a.seed).map_err(corpus_failure)?;
    ensure_dir(&a.out)?;
    for (name, part) in SPLIT_FILES.iter().zip([&split.train, &split.valid, &split.test]) {
        let path = a.out.join(name);
        corpus::write_corpus(&path, part).map_err(|e| io_failure(&path, e))?;
    }
    let summary = IngestSummary {
        kept: records.len(),
        duplicates_removed: removed,
        downsampled: split.dropped.clone(),
        train: split.train.len(),
        valid: split.valid.len(),
        test: split.test.len(),
        stats: corpus::corpus_stats(&records),
    };
    write_json(&a.out.join("ingest.json"), &summary)?;
    let resolved = serde_json::json!({"dedup": a.dedup, "seed": a.seed});
    run.finish(&a.out, &resolved, a.seed)?;
    let _ = writeln!(
        stdout,
        "kept {} records; train {} / valid {} / test {}",
        summary.kept, summary.train, summary.valid, summary.test
    );
    Ok(())
}

pub fn cmd_train(a: &TrainArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let run = Run::start("train");
    let cfg = resolve_config(&a.overrides)?;
    let split = load_split(&a.corpus, cfg.seed)?;
    ensure_dir(&a.out)?;
    write_json(&a.out.join(CONFIG_FILE), &cfg)?;
    let outcome = match trainer::train(&cfg, &split) {
        Ok(o) => o,
        Err(TrainError::DivergedLoss {
            epoch,
            step,
            last_finite,
        }) => {
            let path = a.out.join(DIVERGED_FILE);
            save_checkpoint(&path, &last_finite).map_err(|e| checkpoint_failure(&path, e))?;
            let _ = writeln!(stderr, "last finite parameters saved to {}", path.display());
            run.finish(&a.out, &cfg, cfg.seed)?;
            return Err(Failure::Diverged(format!("loss diverged at epoch {epoch}, step {step}")));
        }
        Err(e) => return Err(train_failure(e)),
    };
    let ckpt_path = a.out.join(CHECKPOINT_FILE);
    save_checkpoint(&ckpt_path, &outcome.checkpoint()).map_err(|e| checkpoint_failure(&ckpt_path, e))?;
    write_jsonl(&a.out.join(HISTORY_FILE), &outcome.history)?;
    run.finish(&a.out, &cfg, cfg.seed)?;
    let _ = writeln!(
        stdout,
        "best epoch {} (valid F1 {:.4}) of {}; checkpoint {}",
        outcome.best_epoch,
        outcome.best_valid_f1,
        outcome.history.len(),
        ckpt_path.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct Detection {
    probability_vulnerable: f64,
    label: Label,
    threshold: f64,
}

pub fn cmd_detect(a: &DetectArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let run = Run::start("detect");
    let (model, head) = load_model(&a.checkpoint)?;
    let code = read_text(&a.function)?;
    let p = trainer::predict(&model, &head, &code, a.threshold).map_err(train_failure)?;
    let out = Detection {
        probability_vulnerable: p.probability,
        label: p.label,
        threshold: a.threshold,
    };
    let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&out).expect("serialises"));
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        run.finish(dir, &serde_json::json!({"threshold": a.threshold}), 0)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct MetricsOutput {
    #[serde(flatten)]
    report: eval::MetricsReport,
    confusion_matrix: eval::ConfusionMatrix,
    records: usize,
}

fn embed_all(model: &EncoderModel, records: &[FunctionRecord]) -> Result<Vec<contravul::EmbeddingVector>, Failure> {
    records
        .iter()
        .map(|r| {
            let seq = model
                .tokenize(&r.code)
                .map_err(|e| Failure::Data(format!("record {:?}: {e}", r.id)))?;
            model
                .encode(&seq, None)
                .map_err(|e| Failure::Data(format!("record {:?}: {e}", r.id)))
        })
        .collect()
}

fn write_pca(path: &Path, model: &EncoderModel, records: &[FunctionRecord]) -> Result<(), Failure> {
    let embeddings = embed_all(model, records)?;
    let pca = eval::pca_project(&embeddings).map_err(eval_failure)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Failure::Data(format!("{}: {e}", path.display()));
    w.write_record(["x", "y", "label"]).map_err(csv_err)?;
    for (p, r) in pca.points.iter().zip(records) {
        w.write_record([p[0].to_string(), p[1].to_string(), r.label.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

pub fn cmd_evaluate(a: &EvaluateArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let run = Run::start("evaluate");
    let (model, head) = load_model(&a.checkpoint)?;
    let records = select(load_split(&a.corpus, a.seed)?, a.split);
    let prepared = trainer::prepare_records(model.tokenizer(), &records).map_err(train_failure)?;
    let scored = trainer::evaluate_records(&model, &head, &prepared, a.threshold).map_err(train_failure)?;
    let (report, cm) = eval::compute_metrics(&scored).map_err(eval_failure)?;
    ensure_dir(&a.out)?;
    let metrics = MetricsOutput {
        report,
        confusion_matrix: cm,
        records: records.len(),
    };
    write_json(&a.out.join(METRICS_FILE), &metrics)?;
    let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&metrics).expect("serialises"));
    if a.include_fixed {
        let vulnerable: Vec<FunctionRecord> = records.iter().filter(|r| r.label == Label::Vulnerable).cloned().collect();
        let fixed = eval::evaluate_fixed_functions(&model, &head, &vulnerable, a.threshold).map_err(eval_failure)?;
        write_json(&a.out.join(FIXED_FILE), &fixed)?;
        let _ = writeln!(
            stdout,
            "fixed functions: {}/{} classified non-vulnerable ({:.1}%)",
            fixed.correct,
            fixed.total,
            100.0 * fixed.accuracy
        );
    }
    if a.include_pca {
        write_pca(&a.out.join(PCA_FILE), &model, &records)?;
    }
    let resolved = serde_json::json!({
        "split": a.split, "seed": a.seed, "threshold": a.threshold,
        "include_fixed": a.include_fixed, "include_pca": a.include_pca,
        "pr_auc_method": PR_AUC_METHOD,
    });
    run.finish(&a.out, &resolved, a.seed)?;
    Ok(())
}

pub fn cmd_explain(a: &ExplainArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let run = Run::start("explain");
    let (model, _) = load_model(&a.checkpoint)?;
    let code = read_text(&a.function)?;
    let kb = KnowledgeBase::ingest(&a.kb, Arc::new(model)).map_err(explain_failure)?;
    let ranked = kb
        .rank_explanations(&code, a.k, a.m, a.min_sim, &CueExtractor)
        .map_err(explain_failure)?;
    if ranked.is_empty() {
        let _ = writeln!(
            stderr,
            "warning: no post reached similarity {}; the knowledge base has nothing close to this function",
            a.min_sim
        );
    }
    let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&ranked).expect("serialises"));
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        run.finish(dir, &serde_json::json!({"k": a.k, "m": a.m, "min_sim": a.min_sim}), 0)?;
    }
    Ok(())
}

/// Keeps every record of the smaller class and a seeded sample of the same
/// size from the larger one; corpus order is preserved.
pub fn balanced_sample(records: &[FunctionRecord], seed_value: u64) -> Vec<FunctionRecord> {
    let (vul, non): (Vec<usize>, Vec<usize>) = (0..records.len()).partition(|&i| records[i].label.is_vulnerable());
    let n = vul.len().min(non.len());
    let mut rng = seed::rng(seed::derive(seed_value, &[0x7A]));
    let mut keep: Vec<usize> = [vul, non]
        .into_iter()
        .flat_map(|mut idx| {
            idx.shuffle(&mut rng);
            idx.truncate(n);
            idx
        })
        .collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| records[i].clone()).collect()
}

pub fn cmd_viz(a: &VizArgs) -> Result<(), Failure> {
    let run = Run::start("viz");
    let (model, _) = load_model(&a.checkpoint)?;
    let records = balanced_sample(&select(load_split(&a.corpus, a.seed)?, a.split), a.seed);
    ensure_dir(&a.out)?;
    write_pca(&a.out.join(PCA_FILE), &model, &records)?;
    run.finish(&a.out, &serde_json::json!({"split": a.split, "seed": a.seed}), a.seed)?;
    Ok(())
}

pub const SWEEP_SUMMARY_TSV: &str = "summary.tsv";
pub const SWEEP_SUMMARY_JSON: &str = "summary.json";

pub fn sweep_history_file(batch_size: usize) -> String {
    format!("history_bs{batch_size}.jsonl")
}

pub fn cmd_sweep(a: &SweepArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let run = Run::start("sweep");
    let cfg = resolve_config(&a.overrides)?;
    if a.batch_sizes.is_empty() || a.batch_sizes.contains(&0) {
        return Err(Failure::Config("batch sizes must be positive".into()));
    }
    let split = load_split(&a.corpus, cfg.seed)?;
    ensure_dir(&a.out)?;
    let runs = experiment::batch_size_sweep(&cfg, &split, &a.batch_sizes).map_err(|e| match e {
        SweepError::Train { source, .. } => train_failure(source),
        SweepError::Eval { source, .. } => eval_failure(source),
    })?;
    for r in &runs {
        write_jsonl(&a.out.join(sweep_history_file(r.row.batch_size)), &r.history)?;
    }
    let rows: Vec<_> = runs.into_iter().map(|r| r.row).collect();
    let table = experiment::summary_table(&rows);
    let tsv = a.out.join(SWEEP_SUMMARY_TSV);
    fs::write(&tsv, &table).map_err(|e| io_failure(&tsv, e))?;
    write_json(&a.out.join(SWEEP_SUMMARY_JSON), &rows)?;
    let resolved = serde_json::json!({"config": cfg, "batch_sizes": a.batch_sizes});
    run.finish(&a.out, &resolved, cfg.seed)?;
    let _ = write!(stdout, "{table}");
    Ok(())
}
