//! Config-driven experiment runs.
//!
//! An experiment trains one head per dataset on a single representation and
//! writes its artifacts under `<output_dir>/<dataset>/<representation>/`:
//!
//! - `head.bin`: the trained head
//! - `train_log.jsonl`: one line per epoch
//! - `report.json`: test-split [`EvalReport`]
//! - `vocab.tsv`: the fitted vocabulary (TF-IDF only)
//! - `selection.json`: per-candidate validation losses (grid runs only)
//!
//! A matrix config combines several experiments into a ranking table or a
//! cross-dataset matrix.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{load_dataset, Document, LabeledDataset};
use crate::encoder::EmbeddingStore;
use crate::error::{Error, Result};
use crate::eval::{average_rank, evaluate, roc_auc, CrossMatrix, EvalReport, EvalSet, RankingTable, PRETRAINED_ROW};
use crate::linear_model::{
    select_hyperparams, train_head, EpochLog, Features, InputKind, LinearHead, TrainConfig,
};
use crate::pooling::{aggregate_batch, parse_pooled_tag, AggregationStrategy, DocumentEmbedding};
use crate::tfidf::{fit_vocabulary, transform_text, FitOptions, SparseVector, TermWeighting, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub path: PathBuf,
    /// Token-embedding store covering every document; required for the
    /// embedding representation.
    #[serde(default)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Representation {
    Tfidf {
        #[serde(default = "one")]
        min_df: u32,
        #[serde(default)]
        sublinear_tf: bool,
    },
    Embedding {
        strategy: AggregationStrategy,
    },
}

fn one() -> u32 {
    1
}

impl Representation {
    /// Directory name for this representation's artifacts.
    pub fn dir_name(&self) -> String {
        match self {
            Representation::Tfidf { .. } => "tfidf".into(),
            Representation::Embedding { strategy } => strategy.name().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Row label in ranking tables; defaults to the representation name.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub datasets: Vec<DatasetEntry>,
    pub representation: Representation,
    #[serde(default)]
    pub train: TrainConfig,
    /// Hyperparameter grid; when non-empty, the head is picked by validation
    /// log-loss instead of training `train` directly.
    #[serde(default)]
    pub grid: Vec<TrainConfig>,
    /// Named grid preset, e.g. `paper-finetune-grid`, appended to `grid`.
    #[serde(default)]
    pub grid_preset: Option<String>,
}

impl ExperimentConfig {
    /// Parses a config file and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self = toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.output_dir);
        for d in &mut self.datasets {
            resolve(&mut d.path);
            if let Some(s) = d.store.as_mut() {
                resolve(s);
            }
        }
    }

    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.representation.dir_name())
    }

    pub fn artifact_dir(&self, dataset: &str) -> PathBuf {
        self.output_dir
            .join(dataset)
            .join(self.representation.dir_name())
    }

    /// Train configs with the experiment seed applied.
    fn seeded(&self, config: &TrainConfig) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..config.clone()
        }
    }

    fn grid(&self) -> Result<Vec<TrainConfig>> {
        let mut grid: Vec<TrainConfig> = self.grid.iter().map(|c| self.seeded(c)).collect();
        if let Some(name) = &self.grid_preset {
            grid.extend(TrainConfig::preset(name)?.iter().map(|c| self.seeded(c)));
        }
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::EmptyInput("experiment lists no datasets"));
        }
        for (i, d) in self.datasets.iter().enumerate() {
            if self.datasets[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::InvalidConfig(format!("dataset `{}` listed twice", d.name)));
            }
            if matches!(self.representation, Representation::Embedding { .. }) && d.store.is_none() {
                return Err(Error::InvalidConfig(format!(
                    "dataset `{}` needs a `store` for the embedding representation",
                    d.name
                )));
            }
        }
        self.train.validate()?;
        for c in self.grid()? {
            c.validate()?;
        }
        Ok(())
    }
}

/// Features of one dataset's three splits under a fitted representation.
struct Splits<R> {
    train: (Vec<R>, Vec<u8>),
    valid: (Vec<R>, Vec<u8>),
    test: (Vec<R>, Vec<u8>),
}

fn labels(docs: &[Document]) -> Vec<u8> {
    docs.iter().map(|d| d.label).collect()
}

fn tfidf_features(docs: &[Document], vocab: &Vocabulary, weighting: TermWeighting) -> Vec<SparseVector> {
    docs.iter().map(|d| transform_text(&d.text, vocab, weighting)).collect()
}

fn weighting(sublinear_tf: bool) -> TermWeighting {
    if sublinear_tf {
        TermWeighting::Sublinear
    } else {
        TermWeighting::Raw
    }
}

/// Pools `docs` out of a token store, or reads them from a store that
/// [`crate::pooling::pool_store`] already pooled with `strategy`.
pub fn embedding_features(
    store: &EmbeddingStore,
    docs: &[Document],
    strategy: AggregationStrategy,
) -> Result<Vec<DocumentEmbedding>> {
    let ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    aggregate_batch(store, &ids, effective_strategy(store, strategy)?)
}

/// Strategy to apply to `store` so its output matches `strategy`: pooled
/// stores are read through [`AggregationStrategy::First`].
fn effective_strategy(store: &EmbeddingStore, strategy: AggregationStrategy) -> Result<AggregationStrategy> {
    let header = store.header();
    match parse_pooled_tag(&header.model_tag) {
        Some((_, pooled)) if header.positions == 1 => {
            if pooled != strategy {
                return Err(Error::InvalidConfig(format!(
                    "store {} holds `{pooled}` embeddings, not `{strategy}`",
                    store.path().display()
                )));
            }
            Ok(AggregationStrategy::First)
        }
        _ => Ok(strategy),
    }
}

/// Source model tag of a token or pooled store.
pub fn source_model_tag(store: &EmbeddingStore) -> &str {
    let tag = &store.header().model_tag;
    match parse_pooled_tag(tag) {
        Some((model, _)) if store.header().positions == 1 => model,
        _ => tag,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidConfig(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn epoch_log_jsonl(log: &[EpochLog]) -> String {
    log.iter()
        .map(|e| serde_json::to_string(e).expect("epoch log serializes") + "\n")
        .collect()
}

fn train_and_report<R: Features + Clone>(
    config: &ExperimentConfig,
    dataset: &str,
    splits: &Splits<R>,
    input_kind: InputKind,
    dir: &Path,
) -> Result<EvalReport> {
    let grid = config.grid()?;
    let (head, log) = if grid.is_empty() {
        let trained = train_head(
            &splits.train.0,
            &splits.train.1,
            Some((&splits.valid.0, &splits.valid.1)),
            &config.seeded(&config.train),
            dataset,
            input_kind,
        )?;
        (trained.head, trained.log)
    } else {
        let selection = select_hyperparams(
            &grid,
            (&splits.train.0, &splits.train.1),
            (&splits.valid.0, &splits.valid.1),
            dataset,
            input_kind,
        )?;
        write_json(&dir.join("selection.json"), &selection.candidates)?;
        (selection.head, selection.log)
    };

    head.save(dir.join("head.bin"))?;
    write_text(&dir.join("train_log.jsonl"), &epoch_log_jsonl(&log))?;
    let test = EvalSet {
        name: dataset.to_string(),
        features: splits.test.0.clone(),
        labels: splits.test.1.clone(),
    };
    let report = evaluate(&head, &test)?;
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

fn run_dataset(config: &ExperimentConfig, entry: &DatasetEntry) -> Result<EvalReport> {
    let dataset = load_dataset(&entry.path, &entry.name)?;
    let dir = config.artifact_dir(&entry.name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    match &config.representation {
        Representation::Tfidf {
            min_df,
            sublinear_tf,
        } => {
            let vocab = fit_vocabulary(dataset.train(), FitOptions { min_df: *min_df })?;
            vocab.save(dir.join("vocab.tsv"))?;
            let w = weighting(*sublinear_tf);
            let splits = Splits {
                train: (tfidf_features(dataset.train(), &vocab, w), labels(dataset.train())),
                valid: (tfidf_features(dataset.valid(), &vocab, w), labels(dataset.valid())),
                test: (tfidf_features(dataset.test(), &vocab, w), labels(dataset.test())),
            };
            train_and_report(config, &entry.name, &splits, InputKind::Tfidf, &dir)
        }
        Representation::Embedding { strategy } => {
            let store_path = entry.store.as_ref().ok_or_else(|| {
                Error::InvalidConfig(format!("dataset `{}` has no store", entry.name))
            })?;
            let store = EmbeddingStore::open(store_path)?;
            let splits = embedding_splits(&store, &dataset, *strategy)?;
            let kind = InputKind::Embedding {
                strategy: *strategy,
                model_tag: source_model_tag(&store).to_string(),
            };
            train_and_report(config, &entry.name, &splits, kind, &dir)
        }
    }
}

fn embedding_splits(
    store: &EmbeddingStore,
    dataset: &LabeledDataset,
    strategy: AggregationStrategy,
) -> Result<Splits<DocumentEmbedding>> {
    Ok(Splits {
        train: (embedding_features(store, dataset.train(), strategy)?, labels(dataset.train())),
        valid: (embedding_features(store, dataset.valid(), strategy)?, labels(dataset.valid())),
        test: (embedding_features(store, dataset.test(), strategy)?, labels(dataset.test())),
    })
}

/// Trains and evaluates one head per dataset, in config order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<EvalReport>> {
    config.validate()?;
    let reports: Vec<EvalReport> = config
        .datasets
        .iter()
        .map(|entry| run_dataset(config, entry))
        .collect::<Result<_>>()?;
    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    Ok(reports)
}

fn load_report(path: &Path) -> Result<EvalReport> {
    #[derive(Deserialize)]
    struct Stored {
        dataset: String,
        model: String,
        roc_auc: f64,
        log_loss: f64,
        n: usize,
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let s: Stored = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    Ok(EvalReport {
        dataset: s.dataset,
        model: s.model,
        roc_auc: s.roc_auc,
        log_loss: s.log_loss,
        n: s.n,
    })
}

/// Reads the test reports an experiment left on disk.
pub fn collect_reports(config: &ExperimentConfig) -> Result<Vec<EvalReport>> {
    config
        .datasets
        .iter()
        .map(|d| load_report(&config.artifact_dir(&d.name).join("report.json")))
        .collect()
}

/// Average ranking of experiments over their shared datasets, scored by
/// test ROC-AUC.
pub fn rank_experiments(configs: &[ExperimentConfig]) -> Result<RankingTable> {
    let first = configs
        .first()
        .ok_or(Error::EmptyInput("no experiments to rank"))?;
    let datasets: Vec<String> = first.datasets.iter().map(|d| d.name.clone()).collect();
    let mut labels = Vec::with_capacity(configs.len());
    let mut scores = Vec::with_capacity(configs.len());
    for config in configs {
        let names: Vec<&str> = config.datasets.iter().map(|d| d.name.as_str()).collect();
        if names != datasets.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::ShapeError(format!(
                "experiment `{}` covers datasets {names:?}, expected {datasets:?}",
                config.label()
            )));
        }
        let reports = collect_reports(config)?;
        labels.push(config.label());
        scores.push(reports.iter().map(|r| r.roc_auc).collect());
    }
    if let Some(dup) = labels.iter().enumerate().find(|(i, l)| labels[..*i].contains(l)) {
        return Err(Error::InvalidConfig(format!("two experiments share the label `{}`", dup.1)));
    }
    average_rank(&labels, &datasets, &scores)
}

/// Evaluates every trained head of `config` on every dataset's test split.
/// The optional `pretrained` experiment contributes a final row made of its
/// own per-dataset test scores.
pub fn cross_evaluate(
    config: &ExperimentConfig,
    pretrained: Option<&ExperimentConfig>,
) -> Result<CrossMatrix> {
    config.validate()?;
    let datasets: Vec<LabeledDataset> = config
        .datasets
        .iter()
        .map(|d| load_dataset(&d.path, &d.name))
        .collect::<Result<_>>()?;
    let heads: Vec<LinearHead> = config
        .datasets
        .iter()
        .map(|d| LinearHead::load(config.artifact_dir(&d.name).join("head.bin")))
        .collect::<Result<_>>()?;

    let mut rows: Vec<String> = config.datasets.iter().map(|d| d.name.clone()).collect();
    let columns = rows.clone();
    let pre_scores = match pretrained {
        Some(pre) => {
            let reports = collect_reports(pre)?;
            let names: Vec<&str> = reports.iter().map(|r| r.dataset.as_str()).collect();
            if names != columns.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(Error::ShapeError(format!(
                    "pre-trained reports cover {names:?}, expected {columns:?}"
                )));
            }
            rows.push(PRETRAINED_ROW.to_string());
            Some(reports.iter().map(|r| 100.0 * r.roc_auc).collect::<Vec<_>>())
        }
        None => None,
    };

    match &config.representation {
        Representation::Tfidf { sublinear_tf, .. } => {
            let vocabs: Vec<Vocabulary> = config
                .datasets
                .iter()
                .map(|d| Vocabulary::load(config.artifact_dir(&d.name).join("vocab.tsv")))
                .collect::<Result<_>>()?;
            let w = weighting(*sublinear_tf);
            CrossMatrix::build(rows, columns, |r, c| {
                if r == heads.len() {
                    return Ok(pre_scores.as_ref().expect("pre-trained row")[c]);
                }
                // Each source head reads the target documents through its own vocabulary.
                let test = datasets[c].test();
                let xs = tfidf_features(test, &vocabs[r], w);
                let probs = heads[r].predict_batch(&xs)?;
                Ok(100.0 * roc_auc(&probs, &labels(test))?)
            })
        }
        Representation::Embedding { strategy } => {
            let test_sets: Vec<EvalSet<DocumentEmbedding>> = config
                .datasets
                .iter()
                .zip(&datasets)
                .map(|(entry, ds)| {
                    let store = EmbeddingStore::open(entry.store.as_ref().expect("validated"))?;
                    Ok(EvalSet {
                        name: entry.name.clone(),
                        features: embedding_features(&store, ds.test(), *strategy)?,
                        labels: labels(ds.test()),
                    })
                })
                .collect::<Result<_>>()?;
            CrossMatrix::build(rows, columns, |r, c| {
                if r == heads.len() {
                    return Ok(pre_scores.as_ref().expect("pre-trained row")[c]);
                }
                let probs = heads[r].predict_batch(&test_sets[c].features)?;
                Ok(100.0 * roc_auc(&probs, &test_sets[c].labels)?)
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MatrixConfig {
    /// Average ranking of several experiments over the same datasets.
    Rank { experiments: Vec<PathBuf> },
    /// Cross-dataset matrix of one experiment's heads.
    Cross {
        experiment: PathBuf,
        #[serde(default)]
        pretrained: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum MatrixOutcome {
    Ranking(RankingTable),
    Cross(CrossMatrix),
}

impl MatrixConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self = toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut config {
            MatrixConfig::Rank { experiments } => experiments.iter_mut().for_each(resolve),
            MatrixConfig::Cross {
                experiment,
                pretrained,
            } => {
                resolve(experiment);
                if let Some(p) = pretrained.as_mut() {
                    resolve(p);
                }
            }
        }
        Ok(config)
    }
}

/// Runs the experiments a matrix config names, then builds its table.
pub fn run_matrix(config: &MatrixConfig) -> Result<MatrixOutcome> {
    match config {
        MatrixConfig::Rank { experiments } => {
            let configs: Vec<ExperimentConfig> = experiments
                .iter()
                .map(ExperimentConfig::load)
                .collect::<Result<_>>()?;
            run_rank(&configs).map(MatrixOutcome::Ranking)
        }
        MatrixConfig::Cross {
            experiment,
            pretrained,
        } => {
            let config = ExperimentConfig::load(experiment)?;
            let pre = pretrained.as_ref().map(ExperimentConfig::load).transpose()?;
            run_cross(&config, pre.as_ref()).map(MatrixOutcome::Cross)
        }
    }
}

pub fn run_rank(configs: &[ExperimentConfig]) -> Result<RankingTable> {
    if configs.is_empty() {
        return Err(Error::EmptyInput("no experiments to rank"));
    }
    for c in configs {
        run_experiment(c)?;
    }
    rank_experiments(configs)
}

pub fn run_cross(
    config: &ExperimentConfig,
    pretrained: Option<&ExperimentConfig>,
) -> Result<CrossMatrix> {
    run_experiment(config)?;
    if let Some(pre) = pretrained {
        run_experiment(pre)?;
    }
    cross_evaluate(config, pretrained)
}
