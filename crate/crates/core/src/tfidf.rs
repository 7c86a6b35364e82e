//! TF-IDF document vectors over a 1-gram vocabulary.
//!
//! Weights use the smoothed inverse document frequency
//! `idf(t) = ln((1 + N) / (1 + df(t))) + 1` times the raw term count, and each
//! document vector is L2-normalized.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{tokenize_words, Document};
use crate::error::{Error, Result};

/// How the term-frequency factor is computed from a raw count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TermWeighting {
    #[default]
    Raw,
    /// `1 + ln(count)`
    Sublinear,
}

impl TermWeighting {
    fn apply(self, count: u32) -> f64 {
        match self {
            TermWeighting::Raw => count as f64,
            TermWeighting::Sublinear => 1.0 + (count as f64).ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    /// Terms appearing in fewer training documents are dropped.
    pub min_df: u32,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { min_df: 1 }
    }
}

/// Fitted vocabulary: terms in lexicographic order with their document
/// frequencies over the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<u32>,
    n_docs: u32,
    term_to_index: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_sorted(terms: Vec<String>, doc_freq: Vec<u32>, n_docs: u32) -> Self {
        let term_to_index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            terms,
            doc_freq,
            n_docs,
            term_to_index,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> u32 {
        self.n_docs
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.term_to_index.get(term).map(|&i| i as usize)
    }

    pub fn doc_freq(&self, term: &str) -> Option<u32> {
        self.index_of(term).map(|i| self.doc_freq[i])
    }

    pub fn idf_at(&self, index: usize) -> f64 {
        let n = self.n_docs as f64;
        let df = self.doc_freq[index] as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index_of(term).map(|i| self.idf_at(i))
    }

    /// Writes `n_docs=<N>` followed by one `term<TAB>df` line per term.
    pub fn to_text(&self) -> String {
        let mut out = format!("n_docs={}\n", self.n_docs);
        for (term, df) in self.terms.iter().zip(&self.doc_freq) {
            let _ = writeln!(out, "{term}\t{df}");
        }
        out
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let malformed = |line: usize, reason: &str| Error::MalformedRecord {
            path: origin.to_path_buf(),
            line: line as u64,
            reason: reason.to_string(),
        };
        let mut lines = text.lines();
        let n_docs: u32 = lines
            .next()
            .and_then(|l| l.strip_prefix("n_docs="))
            .and_then(|n| n.parse().ok())
            .filter(|&n| n >= 1)
            .ok_or_else(|| malformed(1, "expected header `n_docs=<N>` with N >= 1"))?;

        let mut terms: Vec<String> = Vec::new();
        let mut doc_freq = Vec::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let (term, df) = line
                .split_once('\t')
                .ok_or_else(|| malformed(line_no, "expected `term<TAB>df`"))?;
            let df: u32 = df
                .parse()
                .map_err(|_| malformed(line_no, "document frequency is not an integer"))?;
            if df == 0 || df > n_docs {
                return Err(malformed(line_no, "document frequency out of range"));
            }
            if term.is_empty() || terms.last().is_some_and(|prev| prev.as_str() >= term) {
                return Err(malformed(line_no, "terms must be non-empty and strictly sorted"));
            }
            terms.push(term.to_string());
            doc_freq.push(df);
        }
        Ok(Self::from_sorted(terms, doc_freq, n_docs))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}

/// Counts, for every term, the number of training documents that contain it.
pub fn fit_vocabulary(train_docs: &[Document], options: FitOptions) -> Result<Vocabulary> {
    if train_docs.is_empty() {
        return Err(Error::EmptyInput("cannot fit a vocabulary on zero documents"));
    }
    let mut df: BTreeMap<String, u32> = BTreeMap::new();
    for doc in train_docs {
        let mut tokens = tokenize_words(&doc.text);
        tokens.sort_unstable();
        tokens.dedup();
        for token in tokens {
            *df.entry(token).or_insert(0) += 1;
        }
    }
    let (terms, doc_freq): (Vec<_>, Vec<_>) =
        df.into_iter().filter(|(_, n)| *n >= options.min_df).unzip();
    Ok(Vocabulary::from_sorted(terms, doc_freq, train_docs.len() as u32))
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(u32, f32)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds a vector from `(index, weight)` pairs that must already be
    /// strictly increasing in index, in range and finite.
    pub fn from_entries(dim: usize, entries: Vec<(u32, f32)>) -> Result<Self> {
        for (k, &(i, w)) in entries.iter().enumerate() {
            if i as usize >= dim {
                return Err(Error::ShapeError(format!("index {i} >= dim {dim}")));
            }
            if k > 0 && entries[k - 1].0 >= i {
                return Err(Error::ShapeError("indices must be strictly increasing".into()));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("sparse weight at index {i}")));
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f32)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> f32 {
        self.entries
            .binary_search_by_key(&(index as u32), |&(i, _)| i)
            .map_or(0.0, |k| self.entries[k].1)
    }

    pub fn norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, w)| (w as f64) * (w as f64))
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_dense(&self) -> Vec<f32> {
        let mut dense = vec![0.0; self.dim];
        for &(i, w) in &self.entries {
            dense[i as usize] = w;
        }
        dense
    }
}

pub fn transform(doc: &Document, vocab: &Vocabulary) -> SparseVector {
    transform_text(&doc.text, vocab, TermWeighting::Raw)
}

/// TF-IDF vector of `text`. Out-of-vocabulary tokens are ignored, so a text
/// made only of unknown words yields the zero vector.
pub fn transform_text(text: &str, vocab: &Vocabulary, weighting: TermWeighting) -> SparseVector {
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    for token in tokenize_words(text) {
        if let Some(&index) = vocab.term_to_index.get(&token) {
            *counts.entry(index).or_insert(0) += 1;
        }
    }
    let raw: Vec<(u32, f64)> = counts
        .into_iter()
        .map(|(i, c)| (i, weighting.apply(c) * vocab.idf_at(i as usize)))
        .collect();
    let norm = raw.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    let entries = if norm > 0.0 {
        raw.into_iter().map(|(i, w)| (i, (w / norm) as f32)).collect()
    } else {
        Vec::new()
    };
    SparseVector {
        dim: vocab.len(),
        entries,
    }
}
