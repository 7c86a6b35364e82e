//! Command-line entry point.
//!
//! Every subcommand prints JSON on stdout (or an aligned table with
//! `--format text`). Failures print one `{"error": {"kind", "message"}}`
//! object on stderr and exit with status 1. `EMBAGG_THREADS` caps the
//! worker pool used for pooling and cross-evaluation.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use embagg::corpus::{load_dataset, summarize, DatasetStats, Document, LabeledDataset, Split};
use embagg::encoder::{write_toy_store, EmbeddingStore, Precision, ToyEncoderConfig};
use embagg::eval::{average_rank, evaluate, EvalSet};
use embagg::experiment::{
    cross_evaluate, embedding_features, epoch_log_jsonl, run_experiment, run_matrix,
    source_model_tag, ExperimentConfig, MatrixConfig, MatrixOutcome,
};
use embagg::linear_model::{train_head, Features, InputKind, LinearHead, TrainConfig};
use embagg::pooling::{pool_store, AggregationStrategy};
use embagg::tfidf::{fit_vocabulary, transform_text, FitOptions, SparseVector, TermWeighting, Vocabulary};
use embagg::{Error, Result};

#[derive(Parser)]
#[command(name = "embagg", version, about = "Sentiment classification over TF-IDF and pooled token embeddings")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F16,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F16 => Precision::F16,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InputArg {
    Embeddings,
    Tfidf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Dataset statistics: split sizes, document lengths, vocabulary, polarity.
    Stats {
        dir: PathBuf,
        /// Dataset name; defaults to the directory name.
        #[arg(long)]
        name: Option<String>,
    },
    /// Fit a TF-IDF vocabulary on a dataset's training split.
    FitTfidf {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        min_df: u32,
    },
    /// Write a token-embedding store for a dataset with the toy encoder.
    EncodeToy {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        hidden: usize,
        #[arg(long, default_value_t = 60)]
        positions: usize,
        #[arg(long, value_enum, default_value_t = PrecisionArg::F16)]
        precision: PrecisionArg,
    },
    /// Pool every document of a token store into a single-position store.
    Aggregate {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        strategy: AggregationStrategy,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
        precision: PrecisionArg,
    },
    /// Embedding store utilities.
    Store {
        #[command(subcommand)]
        command: StoreCommand,
    },
    /// Train a logistic-regression head on one dataset.
    TrainHead {
        #[arg(long, value_enum)]
        input: InputArg,
        #[arg(long)]
        dataset: PathBuf,
        /// TOML file of training fields; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Token or pooled store (embeddings input).
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        strategy: Option<AggregationStrategy>,
        /// Fitted vocabulary (tfidf input).
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        sublinear_tf: bool,
        /// Where to write the JSON-lines training log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Dataset name recorded in the head; defaults to the directory name.
        #[arg(long)]
        name: Option<String>,
    },
    /// Score a trained head on one split of a dataset.
    Evaluate {
        #[arg(long)]
        head: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        sublinear_tf: bool,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long)]
        name: Option<String>,
    },
    /// Average ranking from a CSV of scores: a `config` column, then one
    /// column per dataset.
    Rank {
        #[arg(long)]
        results: PathBuf,
    },
    /// Cross-dataset matrix from the artifacts of a finished experiment.
    CrossEval {
        #[arg(long)]
        experiment: PathBuf,
        /// Experiment whose per-dataset test scores form the pre-trained row.
        #[arg(long)]
        pretrained: Option<PathBuf>,
    },
    /// Run an experiment config, or a rank/cross matrix config.
    Run { config: PathBuf },
}

#[derive(Subcommand)]
enum StoreCommand {
    /// Print a store's header.
    Inspect { path: PathBuf },
}

fn dir_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn load(dir: &Path, name: Option<&str>) -> Result<LabeledDataset> {
    let name = name.map_or_else(|| dir_name(dir), str::to_string);
    load_dataset(dir, &name)
}

fn emit<T: Serialize>(format: Format, value: &T, text: impl FnOnce() -> String) -> Result<()> {
    let rendered = match format {
        Format::Json => {
            let mut out = serde_json::to_string_pretty(value)
                .map_err(|e| Error::InvalidConfig(format!("serializing output: {e}")))?;
            out.push('\n');
            out
        }
        Format::Text => text(),
    };
    let mut stdout = io::stdout().lock();
    match stdout.write_all(rendered.as_bytes()).and_then(|()| stdout.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn key_values(pairs: &[(&str, String)]) -> String {
    let width = pairs.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    pairs
        .iter()
        .map(|(k, v)| format!("{k:<width$}  {v}\n"))
        .collect()
}

fn weighting(sublinear_tf: bool) -> TermWeighting {
    if sublinear_tf {
        TermWeighting::Sublinear
    } else {
        TermWeighting::Raw
    }
}

fn tfidf_of(docs: &[Document], vocab: &Vocabulary, sublinear_tf: bool) -> Vec<SparseVector> {
    docs.iter()
        .map(|d| transform_text(&d.text, vocab, weighting(sublinear_tf)))
        .collect()
}

fn labels(docs: &[Document]) -> Vec<u8> {
    docs.iter().map(|d| d.label).collect()
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf> {
    value
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig(format!("`{flag}` is required for this input")))
}

fn load_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    let Some(path) = path else {
        return Ok(TrainConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config: TrainConfig =
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

fn train_on<R: Features>(
    dataset: &LabeledDataset,
    features: [Vec<R>; 2],
    config: &TrainConfig,
    input_kind: InputKind,
    out: &Path,
    log_path: Option<&Path>,
    format: Format,
) -> Result<()> {
    let [train, valid] = features;
    let trained = train_head(
        &train,
        &labels(dataset.train()),
        Some((&valid, &labels(dataset.valid()))),
        config,
        dataset.name(),
        input_kind,
    )?;
    trained.head.save(out)?;
    if let Some(path) = log_path {
        fs::write(path, epoch_log_jsonl(&trained.log)).map_err(|e| Error::io(path, e))?;
    }
    let summary = json!({
        "head": out,
        "dataset": dataset.name(),
        "input_kind": trained.head.input_kind.to_string(),
        "dim": trained.head.dim(),
        "log": trained.log,
    });
    emit(format, &summary, || {
        let mut text = format!(
            "head {} ({} weights, {})\n{:>5} {:>12} {:>12} {:>12}\n",
            out.display(),
            trained.head.dim(),
            trained.head.input_kind,
            "epoch",
            "train_loss",
            "valid_loss",
            "lr"
        );
        for e in &trained.log {
            let valid = e.valid_loss.map_or("-".to_string(), |v| format!("{v:.6}"));
            text += &format!("{:>5} {:>12.6} {:>12} {:>12.3e}\n", e.epoch, e.train_loss, valid, e.lr);
        }
        text
    })
}

fn eval_on<R: Features>(head: &LinearHead, name: &str, features: Vec<R>, docs: &[Document], format: Format) -> Result<()> {
    let set = EvalSet {
        name: name.to_string(),
        features,
        labels: labels(docs),
    };
    let report = evaluate(head, &set)?;
    emit(format, &report, || {
        key_values(&[
            ("dataset", report.dataset.clone()),
            ("model", report.model.clone()),
            ("roc_auc", format!("{:.6}", report.roc_auc)),
            ("log_loss", format!("{:.6}", report.log_loss)),
            ("n", report.n.to_string()),
        ])
    })
}

/// Row labels, column names and scores.
type Results = (Vec<String>, Vec<String>, Vec<Vec<f64>>);

fn read_results(path: &Path) -> Result<Results> {
    let malformed = |line: u64, reason: String| Error::MalformedRecord {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::io(path, source),
            kind => malformed(line, format!("{kind:?}")),
        }
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.len() < 2 {
        return Err(malformed(1, "need a label column and at least one dataset column".into()));
    }
    let datasets: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        labels.push(record[0].trim().to_string());
        let row = record
            .iter()
            .skip(1)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| malformed(line, format!("`{v}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        scores.push(row);
    }
    Ok((labels, datasets, scores))
}

fn run(cli: Cli) -> Result<()> {
    let format = cli.format;
    match cli.command {
        Command::Stats { dir, name } => {
            let stats = summarize(&load(&dir, name.as_deref())?);
            emit(format, &stats, || {
                format!("{}\n{}\n", DatasetStats::table_header(), stats.table_row())
            })
        }
        Command::FitTfidf {
            dataset,
            out,
            min_df,
        } => {
            let ds = load(&dataset, None)?;
            let vocab = fit_vocabulary(ds.train(), FitOptions { min_df })?;
            vocab.save(&out)?;
            let summary = json!({ "vocab": out, "terms": vocab.len(), "n_docs": vocab.n_docs() });
            emit(format, &summary, || {
                key_values(&[
                    ("vocab", out.display().to_string()),
                    ("terms", vocab.len().to_string()),
                    ("n_docs", vocab.n_docs().to_string()),
                ])
            })
        }
        Command::EncodeToy {
            dataset,
            out,
            seed,
            hidden,
            positions,
            precision,
        } => {
            let ds = load(&dataset, None)?;
            let config = ToyEncoderConfig {
                seed,
                hidden,
                positions,
            };
            let clamped = write_toy_store(&ds, &config, precision.into(), &out)?;
            inspect(&out, clamped, format)
        }
        Command::Aggregate {
            store,
            strategy,
            out,
            precision,
        } => {
            let source = EmbeddingStore::open(&store)?;
            let clamped = pool_store(&source, strategy, precision.into(), &out)?;
            inspect(&out, clamped, format)
        }
        Command::Store {
            command: StoreCommand::Inspect { path },
        } => inspect(&path, 0, format),
        Command::TrainHead {
            input,
            dataset,
            config,
            out,
            store,
            strategy,
            vocab,
            sublinear_tf,
            log,
            name,
        } => {
            let ds = load(&dataset, name.as_deref())?;
            let config = load_train_config(config.as_deref())?;
            match input {
                InputArg::Tfidf => {
                    let vocab = Vocabulary::load(require(&vocab, "--vocab")?)?;
                    let features = [
                        tfidf_of(ds.train(), &vocab, sublinear_tf),
                        tfidf_of(ds.valid(), &vocab, sublinear_tf),
                    ];
                    train_on(&ds, features, &config, InputKind::Tfidf, &out, log.as_deref(), format)
                }
                InputArg::Embeddings => {
                    let store = EmbeddingStore::open(require(&store, "--store")?)?;
                    let strategy = resolve_strategy(&store, strategy)?;
                    let features = [
                        embedding_features(&store, ds.train(), strategy)?,
                        embedding_features(&store, ds.valid(), strategy)?,
                    ];
                    let kind = InputKind::Embedding {
                        strategy,
                        model_tag: source_model_tag(&store).to_string(),
                    };
                    train_on(&ds, features, &config, kind, &out, log.as_deref(), format)
                }
            }
        }
        Command::Evaluate {
            head,
            dataset,
            store,
            vocab,
            sublinear_tf,
            split,
            name,
        } => {
            let ds = load(&dataset, name.as_deref())?;
            let head = LinearHead::load(&head)?;
            let docs = ds.split(split.into());
            match &head.input_kind {
                InputKind::Tfidf => {
                    let vocab = Vocabulary::load(require(&vocab, "--vocab")?)?;
                    eval_on(&head, ds.name(), tfidf_of(docs, &vocab, sublinear_tf), docs, format)
                }
                InputKind::Embedding { strategy, .. } => {
                    let store = EmbeddingStore::open(require(&store, "--store")?)?;
                    let features = embedding_features(&store, docs, *strategy)?;
                    eval_on(&head, ds.name(), features, docs, format)
                }
            }
        }
        Command::Rank { results } => {
            let (labels, datasets, scores) = read_results(&results)?;
            let table = average_rank(&labels, &datasets, &scores)?;
            emit(format, &table, || table.to_text())
        }
        Command::CrossEval {
            experiment,
            pretrained,
        } => {
            let config = ExperimentConfig::load(&experiment)?;
            let pre = pretrained.map(ExperimentConfig::load).transpose()?;
            let matrix = cross_evaluate(&config, pre.as_ref())?;
            emit(format, &matrix, || matrix.to_text())
        }
        Command::Run { config } => {
            if is_matrix_config(&config)? {
                match run_matrix(&MatrixConfig::load(&config)?)? {
                    MatrixOutcome::Ranking(table) => emit(format, &table, || table.to_text()),
                    MatrixOutcome::Cross(matrix) => emit(format, &matrix, || matrix.to_text()),
                }
            } else {
                let reports = run_experiment(&ExperimentConfig::load(&config)?)?;
                emit(format, &reports, || {
                    let mut text = format!("{:<16} {:>9} {:>9} {:>7}  model\n", "dataset", "roc_auc", "log_loss", "n");
                    for r in &reports {
                        text += &format!(
                            "{:<16} {:>9.4} {:>9.4} {:>7}  {}\n",
                            r.dataset, r.roc_auc, r.log_loss, r.n, r.model
                        );
                    }
                    text
                })
            }
        }
    }
}

/// A pooled store fixes its strategy; a token store needs one on the command line.
fn resolve_strategy(store: &EmbeddingStore, requested: Option<AggregationStrategy>) -> Result<AggregationStrategy> {
    let pooled = embagg::pooling::parse_pooled_tag(&store.header().model_tag)
        .filter(|_| store.header().positions == 1)
        .map(|(_, s)| s);
    match (requested, pooled) {
        (Some(s), _) => Ok(s),
        (None, Some(s)) => Ok(s),
        (None, None) => Err(Error::InvalidConfig(
            "`--strategy` is required for a token store".into(),
        )),
    }
}

fn is_matrix_config(path: &Path) -> Result<bool> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: toml::Table =
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    Ok(table.contains_key("kind"))
}

fn inspect(path: &Path, clamped: usize, format: Format) -> Result<()> {
    let store = EmbeddingStore::open(path)?;
    let h = store.header();
    let value = json!({
        "path": path,
        "header": h,
        "clamped": clamped,
    });
    emit(format, &value, || {
        key_values(&[
            ("path", path.display().to_string()),
            ("precision", format!("{:?}", h.precision).to_lowercase()),
            ("positions", h.positions.to_string()),
            ("hidden", h.hidden.to_string()),
            ("count", h.count.to_string()),
            ("model_tag", h.model_tag.clone()),
            ("clamped", clamped.to_string()),
        ])
    })
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("EMBAGG_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidConfig(format!("EMBAGG_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or_default();
            return fail("Usage", first.trim_start_matches("error: ").to_string());
        }
    };
    match init_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
