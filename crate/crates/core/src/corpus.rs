//! Labeled review corpora with fixed train/valid/test partitions.
//!
//! A dataset directory holds `train.csv`, `valid.csv` and `test.csv`, each a
//! comma-separated file with a header row naming at least the `text` and
//! `polarity` columns. An optional `id` column supplies document ids; without
//! it, ids are `<split>-<row>` with `row` counted from 0 over data rows.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    /// 0 = negative, 1 = positive.
    pub label: u8,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: u8) -> Self {
        debug_assert!(label <= 1, "polarity must be 0 or 1");
        Self {
            id: id.into(),
            text: text.into(),
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.csv",
            Split::Valid => "valid.csv",
            Split::Test => "test.csv",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A named dataset whose three partitions are non-empty and disjoint by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    name: String,
    train: Vec<Document>,
    valid: Vec<Document>,
    test: Vec<Document>,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        train: Vec<Document>,
        valid: Vec<Document>,
        test: Vec<Document>,
    ) -> Result<Self> {
        for (split, docs) in Split::ALL.iter().zip([&train, &valid, &test]) {
            if docs.is_empty() {
                return Err(Error::EmptySplit(split.name().to_string()));
            }
        }
        let mut seen = HashSet::with_capacity(train.len() + valid.len() + test.len());
        for doc in train.iter().chain(&valid).chain(&test) {
            if doc.label > 1 {
                return Err(Error::InvalidConfig(format!(
                    "document `{}` has polarity {}",
                    doc.id, doc.label
                )));
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            train,
            valid,
            test,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn train(&self) -> &[Document] {
        &self.train
    }

    pub fn valid(&self) -> &[Document] {
        &self.valid
    }

    pub fn test(&self) -> &[Document] {
        &self.test
    }

    pub fn split(&self, split: Split) -> &[Document] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Loads `train.csv`, `valid.csv` and `test.csv` from `dir`.
pub fn load_dataset(dir: impl AsRef<Path>, name: &str) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let train = load_split(dir, Split::Train)?;
    let valid = load_split(dir, Split::Valid)?;
    let test = load_split(dir, Split::Test)?;
    LabeledDataset::new(name, train, valid, test)
}

fn load_split(dir: &Path, split: Split) -> Result<Vec<Document>> {
    let path = dir.join(split.file_name());
    if !path.is_file() {
        return Err(Error::MissingSplit(path));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&path)
        .map_err(|e| csv_error(&path, e))?;

    let headers = reader.headers().map_err(|e| csv_error(&path, e))?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (text_col, polarity_col) = match (column("text"), column("polarity")) {
        (Some(t), Some(p)) => (t, p),
        _ => {
            return Err(Error::MalformedRecord {
                path,
                line: 1,
                reason: "header must name `text` and `polarity` columns".into(),
            })
        }
    };
    let id_col = column("id");

    let mut docs = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(&path, e))?;
        let line = record.position().map_or(row as u64 + 2, |p| p.line());
        let malformed = |reason: String| Error::MalformedRecord {
            path: path.clone(),
            line,
            reason,
        };
        let text = record
            .get(text_col)
            .ok_or_else(|| malformed("missing `text` field".into()))?;
        let raw_label = record
            .get(polarity_col)
            .ok_or_else(|| malformed("missing `polarity` field".into()))?;
        let label = parse_polarity(raw_label)
            .ok_or_else(|| malformed(format!("polarity `{raw_label}` is not 0 or 1")))?;
        let id = match id_col.and_then(|c| record.get(c)) {
            Some(id) if !id.is_empty() => id.to_string(),
            _ => format!("{}-{}", split.name(), row),
        };
        docs.push(Document::new(id, text, label));
    }
    Ok(docs)
}

fn parse_polarity(raw: &str) -> Option<u8> {
    match raw.trim() {
        "0" | "0.0" => Some(0),
        "1" | "1.0" => Some(1),
        _ => None,
    }
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            reason: format!("{kind:?}"),
        },
    }
}

/// Concatenates datasets split-wise, in input order, into a dataset named
/// `All`. Ids are re-prefixed as `<source>/<id>`.
pub fn concat_datasets(datasets: &[LabeledDataset]) -> Result<LabeledDataset> {
    if datasets.is_empty() {
        return Err(Error::EmptyInput("no datasets to concatenate"));
    }
    let gather = |split: Split| -> Vec<Document> {
        datasets
            .iter()
            .flat_map(|d| {
                d.split(split).iter().map(move |doc| Document {
                    id: format!("{}/{}", d.name(), doc.id),
                    text: doc.text.clone(),
                    label: doc.label,
                })
            })
            .collect()
    };
    LabeledDataset::new(
        "All",
        gather(Split::Train),
        gather(Split::Valid),
        gather(Split::Test),
    )
}

/// Lowercases `text` and returns its maximal runs of Unicode letters and
/// digits. Everything else separates tokens and is dropped.
pub fn tokenize_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub name: String,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    /// Word tokens per document, over all splits.
    pub mean_len: f64,
    /// Lower-middle value for even document counts.
    pub median_len: usize,
    /// Distinct 1-grams in the training split.
    pub vocab_size: usize,
    /// Fraction of label-1 documents over all splits.
    pub pos_fraction: f64,
}

pub fn summarize(dataset: &LabeledDataset) -> DatasetStats {
    let mut lengths: Vec<usize> = dataset
        .documents()
        .map(|d| tokenize_words(&d.text).len())
        .collect();
    let total = lengths.len();
    let mean_len = lengths.iter().sum::<usize>() as f64 / total.max(1) as f64;
    lengths.sort_unstable();
    let median_len = if total == 0 { 0 } else { lengths[(total - 1) / 2] };

    let vocab: BTreeSet<String> = dataset
        .train()
        .iter()
        .flat_map(|d| tokenize_words(&d.text))
        .collect();
    let positives = dataset.documents().filter(|d| d.label == 1).count();

    DatasetStats {
        name: dataset.name().to_string(),
        n_train: dataset.train().len(),
        n_valid: dataset.valid().len(),
        n_test: dataset.test().len(),
        mean_len,
        median_len,
        vocab_size: vocab.len(),
        pos_fraction: positives as f64 / total.max(1) as f64,
    }
}

impl DatasetStats {
    /// Header matching [`DatasetStats::table_row`].
    pub fn table_header() -> String {
        format!(
            "{:<14} {:>24} {:>12} {:>10} {:>9}",
            "Dataset", "Train/Valid/Test", "Mean/Median", "Vocab", "Positive"
        )
    }

    pub fn table_row(&self) -> String {
        let counts = format!(
            "{} / {} / {}",
            thousands(self.n_train),
            thousands(self.n_valid),
            thousands(self.n_test)
        );
        let lengths = format!("{:.0} / {}", self.mean_len, self.median_len);
        format!(
            "{:<14} {:>24} {:>12} {:>10} {:>8.1}%",
            self.name,
            counts,
            lengths,
            self.vocab_size,
            100.0 * self.pos_fraction
        )
    }
}

fn thousands(n: usize) -> String {
    if n >= 1000 {
        format!("{}k", (n as f64 / 1000.0).round())
    } else {
        n.to_string()
    }
}
