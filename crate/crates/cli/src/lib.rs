//! The `skillrank` command line: one subcommand per pipeline stage, with
//! line-delimited JSON files between stages.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use skillrank_core::corpus::{self, generate_synthetic, write_corpus, SyntheticConfig};
use skillrank_core::embedding::{DEFAULT_DIMENSION, DEFAULT_THRESHOLD};
use skillrank_core::idf::compute_idf_with;
use skillrank_core::model::{load_checkpoint, save_checkpoint};
use skillrank_core::rankeval::DEFAULT_K;
use skillrank_core::service::RankService;
use skillrank_core::{
    build_weak_labels, mean_average_precision, normalize_title, split_dataset, train_head, EmbeddingStore,
    FallbackEmbedder, IdfConfig, IdfTable, LogBase, Loss, NeighborhoodConfig, TitleEncoder, TitleRecord,
    TrainConfig, WeakLabelSet,
};

pub mod serve;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "skillrank", version, about = "Rank the skills of a job title")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean and deduplicate a raw corpus
    Ingest(IngestArgs),
    /// Split a corpus 70:10:20 into train, dev and test
    Split(SplitArgs),
    /// Generate a synthetic corpus
    Synth(SynthArgs),
    /// Embed corpus titles with the built-in trigram encoder
    Embed(EmbedArgs),
    /// Build weak labels from similar-title neighborhoods
    Weaklabel(WeaklabelArgs),
    /// Train the importance head
    Train(TrainArgs),
    /// Compute skill IDF over a training corpus
    Idf(IdfArgs),
    /// Rank skills for one title
    Rank(RankArgs),
    /// Evaluate MAP@k on a test corpus
    Eval(EvalArgs),
    /// Serve rankings over HTTP
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Directory receiving train.jsonl, dev.jsonl and test.jsonl
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 30)]
    pub families: usize,
    #[arg(long, default_value_t = 10)]
    pub synonyms: usize,
    #[arg(long, default_value_t = 150)]
    pub skills: usize,
    #[arg(long, default_value_t = 3)]
    pub generic: usize,
    #[arg(long, default_value_t = 5)]
    pub core: usize,
    #[arg(long, default_value_t = 2)]
    pub noise: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Corpus files; may be repeated
    #[arg(long = "in", required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DIMENSION)]
    pub dim: usize,
}

#[derive(Debug, Args)]
pub struct WeaklabelArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Embeddings for training and dev titles
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss and dev MAP, as JSON
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value = "bce")]
    pub loss: Loss,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct IdfArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "e")]
    pub log_base: LogBase,
    /// Use log((N + 1) / (f + 1))
    #[arg(long)]
    pub smooth: bool,
}

/// Artifacts shared by `rank`, `eval` and `serve`.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub idf: Option<PathBuf>,
    /// Embedding store; titles missing from it fall back to the trigram
    /// encoder when the store was produced by it
    #[arg(long)]
    pub emb: Option<PathBuf>,
    /// IDF for skills absent from the IDF table
    #[arg(long, default_value_t = 0.0)]
    pub fallback_idf: f64,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub title: String,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub top: usize,
    /// Rank by raw importance instead of importance x IDF
    #[arg(long)]
    pub no_idf: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    /// Write the full report (per-title AP) as JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(&a),
        Command::Split(a) => split(&a),
        Command::Synth(a) => synth(&a),
        Command::Embed(a) => embed(&a),
        Command::Weaklabel(a) => weaklabel(&a),
        Command::Train(a) => train(&a),
        Command::Idf(a) => idf(&a),
        Command::Rank(a) => rank(&a),
        Command::Eval(a) => eval(&a),
        Command::Serve(a) => serve::serve(&a),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

pub fn read_corpus(path: &Path) -> Result<Vec<TitleRecord>> {
    let (records, _) = corpus::parse_corpus(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    Ok(records)
}

pub fn read_store(path: &Path) -> Result<EmbeddingStore> {
    EmbeddingStore::load(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn write_records(path: &Path, records: &[TitleRecord]) -> Result<()> {
    write_corpus(records, create(path)?).with_context(|| format!("writing {}", path.display()))
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let (records, summary) =
        corpus::parse_corpus(open(&a.input)?).with_context(|| format!("reading {}", a.input.display()))?;
    write_records(&a.out, &records)?;
    eprintln!(
        "{} records ({} duplicates merged, {} rejected without skills, {} rejected without title)",
        summary.records, summary.merged_duplicates, summary.rejected_empty_skills, summary.rejected_empty_title
    );
    Ok(())
}

fn split(a: &SplitArgs) -> Result<()> {
    let records = read_corpus(&a.input)?;
    let split = split_dataset(&records, a.seed)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    for (name, part) in [("train", &split.train), ("dev", &split.dev), ("test", &split.test)] {
        write_records(&a.out_dir.join(format!("{name}.jsonl")), part)?;
    }
    eprintln!("train {} / dev {} / test {}", split.train.len(), split.dev.len(), split.test.len());
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    if a.families == 0 || a.synonyms == 0 || a.skills == 0 {
        bail!("families, synonyms and skills must all be at least 1");
    }
    let config = SyntheticConfig {
        families: a.families,
        synonyms_per_family: a.synonyms,
        skills: a.skills,
        generic_skills: a.generic,
        core_skills: a.core,
        noise_skills: a.noise,
        seed: a.seed,
    };
    write_records(&a.out, &generate_synthetic(&config))
}

fn embed(a: &EmbedArgs) -> Result<()> {
    let mut records = Vec::new();
    for path in &a.input {
        records.extend(read_corpus(path)?);
    }
    let store = FallbackEmbedder::new(a.dim)?.embed_all(records.iter().map(|r| r.title.as_str()))?;
    store.write(create(&a.out)?)?;
    Ok(())
}

fn weaklabel(a: &WeaklabelArgs) -> Result<()> {
    let train = read_corpus(&a.train)?;
    let store = read_store(&a.emb)?;
    let labels = build_weak_labels(&train, &store, &NeighborhoodConfig::new(a.threshold)?)?;
    labels.write(create(&a.out)?)?;
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let labels = WeakLabelSet::load(open(&a.labels)?).with_context(|| format!("reading {}", a.labels.display()))?;
    let dev = match &a.dev {
        Some(p) => read_corpus(p)?,
        None => Vec::new(),
    };
    let store = read_store(&a.emb)?;
    let config = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        patience: a.patience,
        loss: a.loss,
        eval_k: a.k,
    };
    let (head, history) = train_head(&labels, &dev, &store, &config)?;
    save_checkpoint(&head, create(&a.out)?)?;
    if let Some(path) = &a.history {
        let mut w = create(path)?;
        serde_json::to_writer(&mut w, &history)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    if let Some(last) = history.epochs.last() {
        eprintln!(
            "{} epochs, final loss {}, best epoch {:?}",
            history.epochs.len(),
            last.train_loss,
            history.best_epoch
        );
    }
    Ok(())
}

fn idf(a: &IdfArgs) -> Result<()> {
    let train = read_corpus(&a.train)?;
    let table = compute_idf_with(
        &train,
        &IdfConfig {
            log_base: a.log_base,
            smooth: a.smooth,
        },
    )?;
    table.write(create(&a.out)?)?;
    Ok(())
}

/// Loads the checkpoint, optional IDF table and title encoder.
pub fn load_service(a: &ModelArgs) -> Result<RankService> {
    let head = load_checkpoint(open(&a.model)?).with_context(|| format!("reading {}", a.model.display()))?;
    let idf = match &a.idf {
        Some(p) => Some(IdfTable::load(open(p)?).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let encoder = match &a.emb {
        Some(p) => TitleEncoder::with_store(read_store(p)?),
        None => TitleEncoder::fallback(head.dimension())?,
    };
    Ok(RankService::new(head, idf, encoder)?.with_fallback_idf(a.fallback_idf))
}

fn rank(a: &RankArgs) -> Result<()> {
    if !a.no_idf && a.model.idf.is_none() {
        bail!("--idf is required unless --no-idf is given");
    }
    let service = load_service(&a.model)?;
    let title = normalize_title(&a.title)?;
    let ranked = service.rank(&title, a.top.max(1), !a.no_idf)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (skill, score) in &ranked.entries {
        writeln!(out, "{skill}\t{score}")?;
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let service = load_service(&a.model)?;
    let test = read_corpus(&a.test)?;
    let use_idf = a.model.idf.is_some();
    let report = mean_average_precision(&test, |r| service.rank(&r.title, a.k, use_idf), a.k)?;
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        serde_json::to_writer(&mut w, &report)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    println!("{}", report.mean_ap);
    Ok(())
}
