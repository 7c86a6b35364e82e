//! Aggregation of a `T × H` token-embedding matrix into one document vector.
//!
//! Rows are token positions; row 1 (index 0) is the classification token.
//! Statistics marked "rest" run over rows 2..T. Reductions accumulate in f64
//! and the result is rounded to f32 once, whatever the stored precision.

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{EmbeddingStore, Precision, StoreWriter, TokenEmbeddingMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AggregationStrategy {
    /// Row 1.
    First,
    /// Row 2.
    Second,
    /// Row T.
    Last,
    SumAll,
    MeanAll,
    SumExceptFirst,
    MeanExceptFirst,
    /// Row 1 ‖ sum of rest.
    FirstPlusSum,
    /// Row 1 ‖ mean of rest.
    FirstPlusMean,
    /// Row 1 ‖ mean of rest ‖ population std of rest.
    FirstMeanStd,
    /// Row 1 ‖ mean of rest ‖ max of rest.
    FirstMeanMax,
    /// Mean ‖ min ‖ max of rest.
    MeanMinMax,
    /// 25th ‖ 50th ‖ 75th percentile of rest, linearly interpolated.
    Quantiles255075,
}

use AggregationStrategy::*;

impl AggregationStrategy {
    pub const ALL: [AggregationStrategy; 13] = [
        First,
        Second,
        Last,
        SumAll,
        MeanAll,
        SumExceptFirst,
        MeanExceptFirst,
        FirstPlusSum,
        FirstPlusMean,
        FirstMeanStd,
        FirstMeanMax,
        MeanMinMax,
        Quantiles255075,
    ];

    /// Kebab-case name used on the command line and in file paths.
    pub fn name(self) -> &'static str {
        match self {
            First => "first",
            Second => "second",
            Last => "last",
            SumAll => "sum-all",
            MeanAll => "mean-all",
            SumExceptFirst => "sum-except-first",
            MeanExceptFirst => "mean-except-first",
            FirstPlusSum => "first-sum",
            FirstPlusMean => "first-mean",
            FirstMeanStd => "first-mean-std",
            FirstMeanMax => "first-mean-max",
            MeanMinMax => "mean-min-max",
            Quantiles255075 => "quantiles-25-50-75",
        }
    }

    /// Human-readable label for tables.
    pub fn label(self) -> &'static str {
        match self {
            First => "first",
            Second => "second",
            Last => "last",
            SumAll => "sum all",
            MeanAll => "mean all",
            SumExceptFirst => "sum all except 1st",
            MeanExceptFirst => "mean all except 1st",
            FirstPlusSum => "first + sum",
            FirstPlusMean => "first + mean",
            FirstMeanStd => "first + mean + std",
            FirstMeanMax => "first + mean + max",
            MeanMinMax => "mean + min + max",
            Quantiles255075 => "quantiles 25,50,75",
        }
    }

    /// Number of H-sized blocks concatenated in the output.
    pub fn multiplicity(self) -> usize {
        match self {
            First | Second | Last | SumAll | MeanAll | SumExceptFirst | MeanExceptFirst => 1,
            FirstPlusSum | FirstPlusMean => 2,
            FirstMeanStd | FirstMeanMax | MeanMinMax | Quantiles255075 => 3,
        }
    }

    /// Fewest token positions the strategy is defined for.
    pub fn min_positions(self) -> usize {
        match self {
            First | Last | SumAll | MeanAll => 1,
            _ => 2,
        }
    }
}

pub fn output_dim(strategy: AggregationStrategy, hidden: usize) -> usize {
    strategy.multiplicity() * hidden
}

impl fmt::Display for AggregationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key || k.label() == key)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

impl TryFrom<String> for AggregationStrategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AggregationStrategy> for String {
    fn from(k: AggregationStrategy) -> Self {
        k.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentEmbedding {
    pub doc_id: String,
    pub data: Vec<f32>,
}

impl DocumentEmbedding {
    pub fn dim(&self) -> usize {
        self.data.len()
    }
}

/// Column-wise reductions over a contiguous range of rows.
struct Rows<'a> {
    values: &'a [f32],
    hidden: usize,
    range: Range<usize>,
}

impl Rows<'_> {
    fn count(&self) -> f64 {
        self.range.len() as f64
    }

    fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.range
            .clone()
            .map(move |r| self.values[r * self.hidden + c] as f64)
    }

    fn map_columns(&self, f: impl Fn(&Self, usize) -> f64) -> Vec<f64> {
        (0..self.hidden).map(|c| f(self, c)).collect()
    }

    fn sum(&self) -> Vec<f64> {
        self.map_columns(|s, c| s.column(c).sum())
    }

    fn mean(&self) -> Vec<f64> {
        let n = self.count();
        self.sum().into_iter().map(|s| s / n).collect()
    }

    fn std(&self) -> Vec<f64> {
        let mean = self.mean();
        let n = self.count();
        self.map_columns(|s, c| {
            let var = s.column(c).map(|x| (x - mean[c]).powi(2)).sum::<f64>() / n;
            var.sqrt()
        })
    }

    fn min(&self) -> Vec<f64> {
        self.map_columns(|s, c| s.column(c).fold(f64::INFINITY, f64::min))
    }

    fn max(&self) -> Vec<f64> {
        self.map_columns(|s, c| s.column(c).fold(f64::NEG_INFINITY, f64::max))
    }

    /// Quantiles `qs` of every column with linear interpolation between order
    /// statistics at position `q · (n − 1)`.
    fn quantiles(&self, qs: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(self.hidden); qs.len()];
        let mut column = Vec::with_capacity(self.range.len());
        for c in 0..self.hidden {
            column.clear();
            column.extend(self.column(c));
            column.sort_by(f64::total_cmp);
            for (q, dst) in qs.iter().zip(out.iter_mut()) {
                dst.push(interpolate(&column, *q));
            }
        }
        out
    }
}

fn interpolate(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn aggregate(
    matrix: &TokenEmbeddingMatrix,
    strategy: AggregationStrategy,
) -> Result<DocumentEmbedding> {
    let (t, h) = matrix.shape();
    if t < strategy.min_positions() {
        return Err(Error::InsufficientTokens {
            strategy: strategy.name(),
            required: strategy.min_positions(),
            actual: t,
        });
    }
    let values = matrix.values_f32();
    let rows = |range: Range<usize>| Rows {
        values: &values,
        hidden: h,
        range,
    };
    let row = |i: usize| -> Vec<f64> { values[i * h..(i + 1) * h].iter().map(|&v| v as f64).collect() };
    let all = rows(0..t);
    let rest = rows(1..t);

    let blocks: Vec<Vec<f64>> = match strategy {
        First => vec![row(0)],
        Second => vec![row(1)],
        Last => vec![row(t - 1)],
        SumAll => vec![all.sum()],
        MeanAll => vec![all.mean()],
        SumExceptFirst => vec![rest.sum()],
        MeanExceptFirst => vec![rest.mean()],
        FirstPlusSum => vec![row(0), rest.sum()],
        FirstPlusMean => vec![row(0), rest.mean()],
        FirstMeanStd => vec![row(0), rest.mean(), rest.std()],
        FirstMeanMax => vec![row(0), rest.mean(), rest.max()],
        MeanMinMax => vec![rest.mean(), rest.min(), rest.max()],
        Quantiles255075 => rest.quantiles(&[0.25, 0.5, 0.75]),
    };
    let data: Vec<f32> = blocks.into_iter().flatten().map(|v| v as f32).collect();
    debug_assert_eq!(data.len(), output_dim(strategy, h));
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{} embedding of `{}`",
            strategy.name(),
            matrix.doc_id()
        )));
    }
    Ok(DocumentEmbedding {
        doc_id: matrix.doc_id().to_string(),
        data,
    })
}

/// Pools only the first `valid_len` positions, dropping padding slots.
pub fn aggregate_masked(
    matrix: &TokenEmbeddingMatrix,
    strategy: AggregationStrategy,
    valid_len: usize,
) -> Result<DocumentEmbedding> {
    let kept = valid_len.min(matrix.positions());
    if kept < strategy.min_positions() {
        return Err(Error::InsufficientTokens {
            strategy: strategy.name(),
            required: strategy.min_positions(),
            actual: kept,
        });
    }
    aggregate(&matrix.truncated(kept)?, strategy)
}

/// Aggregates the named documents of `store`, in the order given. Documents
/// are processed in parallel; output order never depends on scheduling.
pub fn aggregate_batch<S: AsRef<str> + Sync>(
    store: &EmbeddingStore,
    doc_ids: &[S],
    strategy: AggregationStrategy,
) -> Result<Vec<DocumentEmbedding>> {
    if let Some(missing) = doc_ids.iter().find(|id| !store.contains(id.as_ref())) {
        return Err(Error::UnknownDocument(missing.as_ref().to_string()));
    }
    doc_ids
        .par_iter()
        .map(|id| aggregate(&store.get(id.as_ref())?, strategy))
        .collect()
}

/// Model tag of a store of `strategy`-pooled embeddings from `model_tag`.
pub fn pooled_tag(model_tag: &str, strategy: AggregationStrategy) -> String {
    format!("{model_tag}#{}", strategy.name())
}

/// Inverse of [`pooled_tag`].
pub fn parse_pooled_tag(tag: &str) -> Option<(&str, AggregationStrategy)> {
    let (model, strategy) = tag.rsplit_once('#')?;
    Some((model, strategy.parse().ok()?))
}

/// Pools every document of `store` into a new store at `out` with one
/// position and `output_dim` channels. Returns the number of values clamped
/// when writing f16.
pub fn pool_store(
    store: &EmbeddingStore,
    strategy: AggregationStrategy,
    precision: Precision,
    out: impl AsRef<Path>,
) -> Result<usize> {
    let header = store.header();
    let dim = output_dim(strategy, header.hidden);
    let tag = pooled_tag(&header.model_tag, strategy);
    let mut writer = StoreWriter::create(out, precision, 1, dim, &tag, store.ids().to_vec())?;
    // Bounded chunks keep memory flat on large stores.
    for chunk in store.ids().chunks(1024) {
        for emb in aggregate_batch(store, chunk, strategy)? {
            writer.append(&TokenEmbeddingMatrix::from_f32(emb.doc_id, 1, dim, emb.data)?)?;
        }
    }
    writer.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m3x2() -> TokenEmbeddingMatrix {
        TokenEmbeddingMatrix::from_rows("d", &[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]])
            .unwrap()
    }

    fn pool(m: &TokenEmbeddingMatrix, s: AggregationStrategy) -> Vec<f32> {
        aggregate(m, s).unwrap().data
    }

    #[test]
    fn hand_computed_3x2() {
        let m = m3x2();
        assert_eq!(pool(&m, MeanAll), [3.0, 4.0]);
        assert_eq!(pool(&m, SumAll), [9.0, 12.0]);
        assert_eq!(pool(&m, FirstMeanStd), [1.0, 2.0, 4.0, 5.0, 1.0, 1.0]);
        assert_eq!(pool(&m, First), [1.0, 2.0]);
        assert_eq!(pool(&m, Second), [3.0, 4.0]);
        assert_eq!(pool(&m, Last), [5.0, 6.0]);
        assert_eq!(pool(&m, SumExceptFirst), [8.0, 10.0]);
        assert_eq!(pool(&m, MeanExceptFirst), [4.0, 5.0]);
        assert_eq!(pool(&m, FirstPlusSum), [1.0, 2.0, 8.0, 10.0]);
        assert_eq!(pool(&m, FirstPlusMean), [1.0, 2.0, 4.0, 5.0]);
        assert_eq!(pool(&m, FirstMeanMax), [1.0, 2.0, 4.0, 5.0, 5.0, 6.0]);
        assert_eq!(pool(&m, MeanMinMax), [4.0, 5.0, 3.0, 4.0, 5.0, 6.0]);
        // two rest rows: q25 = 3 + 0.25·2, q50 = midpoint, q75 = 3 + 0.75·2
        assert_eq!(pool(&m, Quantiles255075), [3.5, 4.5, 4.0, 5.0, 4.5, 5.5]);
    }

    #[test]
    fn constant_matrix() {
        let c = [0.5f32, -2.0, 7.25];
        let m = TokenEmbeddingMatrix::from_rows("c", &vec![c.to_vec(); 5]).unwrap();
        assert_eq!(pool(&m, MeanAll), c);
        assert_eq!(&pool(&m, FirstMeanStd)[6..], [0.0; 3]);
        let mmm = pool(&m, MeanMinMax);
        assert_eq!(&mmm[3..6], &mmm[6..9]);
        assert_eq!(&mmm[3..6], c);
    }

    #[test]
    fn output_dims() {
        assert_eq!(output_dim(First, 768), 768);
        assert_eq!(output_dim(FirstPlusMean, 768), 1536);
        assert_eq!(output_dim(Quantiles255075, 1024), 3072);
        assert_eq!(output_dim(FirstMeanStd, 1024), 3072);
        for k in AggregationStrategy::ALL {
            let m = TokenEmbeddingMatrix::from_f32("d", 3, 4, vec![0.5; 12]).unwrap();
            assert_eq!(aggregate(&m, k).unwrap().dim(), output_dim(k, 4));
        }
    }

    #[test]
    fn single_position_limits() {
        let m = TokenEmbeddingMatrix::from_f32("d", 1, 2, vec![1.0, 2.0]).unwrap();
        for k in AggregationStrategy::ALL {
            let r = aggregate(&m, k);
            if k.min_positions() > 1 {
                assert!(matches!(r, Err(Error::InsufficientTokens { actual: 1, .. })), "{k}");
            } else {
                assert_eq!(r.unwrap().data, [1.0, 2.0], "{k}");
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for k in AggregationStrategy::ALL {
            assert_eq!(k.name().parse::<AggregationStrategy>().unwrap(), k);
            assert_eq!(k.label().parse::<AggregationStrategy>().unwrap(), k);
        }
        assert_eq!("quantiles-25-50-75".parse::<AggregationStrategy>().unwrap(), Quantiles255075);
        assert!(matches!("median".parse::<AggregationStrategy>(), Err(Error::UnknownStrategy(_))));
    }

    #[test]
    fn masked_pooling_ignores_padding() {
        let rows = vec![vec![1.0], vec![3.0], vec![100.0], vec![100.0]];
        let m = TokenEmbeddingMatrix::from_rows("d", &rows).unwrap();
        assert_eq!(aggregate_masked(&m, MeanAll, 2).unwrap().data, [2.0]);
        assert_eq!(aggregate_masked(&m, Last, 2).unwrap().data, [3.0]);
        assert_eq!(aggregate_masked(&m, MeanAll, 10).unwrap().data, [51.0]);
        assert!(aggregate_masked(&m, Second, 1).is_err());
    }

    #[test]
    fn f16_storage_pools_in_wide_precision() {
        let m = m3x2();
        let (half, _) = m.to_f16();
        assert_eq!(pool(&half, FirstMeanStd), pool(&m, FirstMeanStd));
    }

    #[test]
    fn serde_uses_kebab_names() {
        let json = serde_json::to_string(&FirstMeanStd).unwrap();
        assert_eq!(json, "\"first-mean-std\"");
        let back: AggregationStrategy = serde_json::from_str("\"quantiles-25-50-75\"").unwrap();
        assert_eq!(back, Quantiles255075);
    }
}
