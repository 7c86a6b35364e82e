//! Independent oracles and helpers shared by the integration tests.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use embagg::pooling::AggregationStrategy::{self, *};
use embagg::TokenEmbeddingMatrix;
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Column `j` over the given rows, in f64.
fn column(rows: &[Vec<f64>], range: std::ops::Range<usize>, j: usize) -> Vec<f64> {
    rows[range].iter().map(|r| r[j]).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn population_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Linear interpolation between order statistics at position `q (n - 1)`.
fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (pos - lo as f64) * (s[hi] - s[lo])
}

/// Brute-force pooling of a row-major matrix, one column at a time.
/// `None` when the matrix has too few rows for the strategy.
pub fn oracle_pool(rows: &[Vec<f64>], strategy: AggregationStrategy) -> Option<Vec<f64>> {
    let t = rows.len();
    let h = rows[0].len();
    let needs_rest = !matches!(strategy, First | Last | SumAll | MeanAll);
    if needs_rest && t < 2 {
        return None;
    }
    let per_column = |f: &dyn Fn(&[f64]) -> f64, range: std::ops::Range<usize>| -> Vec<f64> {
        (0..h).map(|j| f(&column(rows, range.clone(), j))).collect()
    };
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = rows[0].clone();
    let rest = 1..t;
    let blocks: Vec<Vec<f64>> = match strategy {
        First => vec![first],
        Second => vec![rows[1].clone()],
        Last => vec![rows[t - 1].clone()],
        SumAll => vec![per_column(&sum, 0..t)],
        MeanAll => vec![per_column(&mean, 0..t)],
        SumExceptFirst => vec![per_column(&sum, rest)],
        MeanExceptFirst => vec![per_column(&mean, rest)],
        FirstPlusSum => vec![first, per_column(&sum, rest)],
        FirstPlusMean => vec![first, per_column(&mean, rest)],
        FirstMeanStd => vec![
            first,
            per_column(&mean, rest.clone()),
            per_column(&population_std, rest),
        ],
        FirstMeanMax => vec![first, per_column(&mean, rest.clone()), per_column(&max, rest)],
        MeanMinMax => vec![
            per_column(&mean, rest.clone()),
            per_column(&min, rest.clone()),
            per_column(&max, rest),
        ],
        Quantiles255075 => [0.25, 0.5, 0.75]
            .iter()
            .map(|&q| per_column(&|v: &[f64]| quantile(v, q), rest.clone()))
            .collect(),
    };
    Some(blocks.concat())
}

/// Rows of a matrix as f64, read through the public accessor.
pub fn rows_of(m: &TokenEmbeddingMatrix) -> Vec<Vec<f64>> {
    let (_, h) = m.shape();
    m.values_f32()
        .chunks(h)
        .map(|r| r.iter().map(|&x| x as f64).collect())
        .collect()
}

/// Matrix with entries uniform in [-1, 1), the toy encoder's value range.
pub fn random_matrix<R: Rng>(rng: &mut R, id: &str, t: usize, h: usize) -> TokenEmbeddingMatrix {
    let data = (0..t * h).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    TokenEmbeddingMatrix::from_f32(id, t, h, data).unwrap()
}

/// Fraction of positive/negative pairs ranked correctly, ties counted 1/2.
/// Counts are kept as integers (doubled) and divided once.
pub fn pair_count_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut doubled: u64 = 0;
    let mut pairs: u64 = 0;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                doubled += 2;
            } else if scores[i] == scores[j] {
                doubled += 1;
            }
        }
    }
    doubled as f64 / (2 * pairs) as f64
}

/// Scores and labels with both classes present. With `levels` set, scores
/// take only that many distinct values, which forces heavy ties.
pub fn random_scored<R: Rng>(rng: &mut R, n: usize, levels: Option<u32>) -> (Vec<f64>, Vec<u8>) {
    assert!(n >= 2);
    let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let scores = (0..n)
        .map(|_| match levels {
            Some(k) => rng.gen_range(0..k) as f64 / k as f64,
            None => rng.gen::<f64>(),
        })
        .collect();
    (scores, labels)
}

pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_csv(path: &Path) -> CsvTable {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    CsvTable { header, rows }
}

pub fn write_dataset(dir: &Path, splits: [&[(&str, u8)]; 3]) {
    fs::create_dir_all(dir).unwrap();
    for (name, docs) in ["train", "valid", "test"].iter().zip(splits) {
        let mut w = csv::Writer::from_path(dir.join(format!("{name}.csv"))).unwrap();
        w.write_record(["id", "text", "polarity"]).unwrap();
        for (i, (text, label)) in docs.iter().enumerate() {
            w.write_record([format!("{name}-{i}"), text.to_string(), label.to_string()])
                .unwrap();
        }
        w.flush().unwrap();
    }
}

/// Copies a fixture dataset directory into `dst`.
pub fn copy_dataset(name: &str, dst: &Path) -> PathBuf {
    let out = dst.join(name);
    fs::create_dir_all(&out).unwrap();
    for split in ["train.csv", "valid.csv", "test.csv"] {
        fs::copy(fixture(name).join(split), out.join(split)).unwrap();
    }
    out
}
