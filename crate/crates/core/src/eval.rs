//! Metrics and the comparison tables built from them: ROC-AUC, log-loss,
//! average rankings across datasets, and cross-dataset score matrices.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linear_model::{Features, LinearHead};

/// Probabilities are clipped to `[CLIP, 1 − CLIP]` before taking logs.
pub const LOG_LOSS_CLIP: f64 = 1e-15;

/// Area under the ROC curve via the Mann–Whitney rank sum. Tied scores get
/// their mean rank, which credits each tied positive/negative pair with 1/2.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeError(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("ROC-AUC scores".into()));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric("ROC-AUC needs both classes"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end share their mean
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let tied_positives = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        positive_rank_sum += mid_rank * tied_positives as f64;
        start = end;
    }
    let p = positives as f64;
    let u = positive_rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// Mean negative log-likelihood of binary labels.
pub fn log_loss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::ShapeError(format!(
            "{} probabilities but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::EmptyInput("log-loss of zero examples"));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(LOG_LOSS_CLIP, 1.0 - LOG_LOSS_CLIP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub dataset: String,
    pub model: String,
    pub roc_auc: f64,
    pub log_loss: f64,
    pub n: usize,
}

/// Labeled examples of one dataset's evaluation split.
#[derive(Debug, Clone)]
pub struct EvalSet<R> {
    pub name: String,
    pub features: Vec<R>,
    pub labels: Vec<u8>,
}

pub fn evaluate<R: Features>(head: &LinearHead, set: &EvalSet<R>) -> Result<EvalReport> {
    let probs = head.predict_batch(&set.features)?;
    Ok(EvalReport {
        dataset: set.name.clone(),
        model: head.input_kind.to_string(),
        roc_auc: roc_auc(&probs, &set.labels)?,
        log_loss: log_loss(&probs, &set.labels)?,
        n: set.labels.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub label: String,
    /// Rank per dataset, 1 = best; ties share the mean of their positions.
    pub ranks: Vec<f64>,
    pub avg_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingTable {
    pub datasets: Vec<String>,
    pub rows: Vec<RankRow>,
}

impl RankingTable {
    pub fn row(&self, label: &str) -> Option<&RankRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(6);
        let mut out = format!("{:<width$}", "Config");
        for d in &self.datasets {
            let _ = write!(out, " {:>12}", d);
        }
        let _ = writeln!(out, " {:>9}", "Avg.Rank");
        for row in &self.rows {
            let _ = write!(out, "{:<width$}", row.label);
            for r in &row.ranks {
                let _ = write!(out, " {:>12.1}", r);
            }
            let _ = writeln!(out, " {:>9.1}", row.avg_rank);
        }
        out
    }
}

/// Ranks configurations per dataset by descending score and averages the
/// ranks across datasets. `scores[i][j]` is configuration `i` on dataset `j`.
/// Rows come back sorted by average rank, ties by label.
pub fn average_rank(
    labels: &[String],
    datasets: &[String],
    scores: &[Vec<f64>],
) -> Result<RankingTable> {
    if scores.is_empty() || datasets.is_empty() {
        return Err(Error::EmptyInput("ranking needs at least one config and dataset"));
    }
    if labels.len() != scores.len() {
        return Err(Error::ShapeError(format!(
            "{} labels for {} score rows",
            labels.len(),
            scores.len()
        )));
    }
    if let Some((i, row)) = scores.iter().enumerate().find(|(_, r)| r.len() != datasets.len()) {
        return Err(Error::ShapeError(format!(
            "row `{}` has {} cells, expected {}",
            labels[i],
            row.len(),
            datasets.len()
        )));
    }
    if scores.iter().flatten().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("ranking scores".into()));
    }

    let k = scores.len();
    let mut ranks = vec![vec![0.0; datasets.len()]; k];
    for col in 0..datasets.len() {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| scores[b][col].total_cmp(&scores[a][col]));
        let mut start = 0;
        while start < k {
            let mut end = start + 1;
            while end < k && scores[order[end]][col] == scores[order[start]][col] {
                end += 1;
            }
            let mid_rank = (start + 1 + end) as f64 / 2.0;
            for &i in &order[start..end] {
                ranks[i][col] = mid_rank;
            }
            start = end;
        }
    }

    let mut rows: Vec<RankRow> = labels
        .iter()
        .zip(ranks)
        .map(|(label, ranks)| RankRow {
            label: label.clone(),
            avg_rank: ranks.iter().sum::<f64>() / ranks.len() as f64,
            ranks,
        })
        .collect();
    rows.sort_by(|a, b| a.avg_rank.total_cmp(&b.avg_rank).then_with(|| a.label.cmp(&b.label)));
    Ok(RankingTable {
        datasets: datasets.to_vec(),
        rows,
    })
}

/// Rows are training sources, columns evaluation datasets, cells ROC-AUC in
/// percent at full precision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<f64>>,
}

pub const PRETRAINED_ROW: &str = "Pre-trained";

impl CrossMatrix {
    pub fn new(rows: Vec<String>, columns: Vec<String>, cells: Vec<Vec<f64>>) -> Result<Self> {
        if cells.len() != rows.len() || cells.iter().any(|r| r.len() != columns.len()) {
            return Err(Error::ShapeError("cross matrix must be rectangular".into()));
        }
        if cells.iter().flatten().any(|c| !(0.0..=100.0).contains(c)) {
            return Err(Error::ShapeError("cross matrix cells must lie in [0, 100]".into()));
        }
        Ok(Self {
            rows,
            columns,
            cells,
        })
    }

    /// Fills every cell with `score(row, column)`, computing cells in
    /// parallel and placing them by index.
    pub fn build<F>(rows: Vec<String>, columns: Vec<String>, score: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> Result<f64> + Sync,
    {
        let width = columns.len();
        let flat: Vec<f64> = (0..rows.len() * width)
            .into_par_iter()
            .map(|k| score(k / width, k % width))
            .collect::<Result<_>>()?;
        let cells = if width == 0 {
            vec![Vec::new(); rows.len()]
        } else {
            flat.chunks(width).map(<[f64]>::to_vec).collect()
        };
        Self::new(rows, columns, cells)
    }

    pub fn cell(&self, row: &str, column: &str) -> Option<f64> {
        let r = self.rows.iter().position(|x| x == row)?;
        let c = self.columns.iter().position(|x| x == column)?;
        Some(self.cells[r][c])
    }

    /// Aligned table with one decimal per cell.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(String::len).max().unwrap_or(0).max(5);
        let col_width = self.columns.iter().map(String::len).max().unwrap_or(0).max(6);
        let mut out = format!("{:<width$}", "Model");
        for c in &self.columns {
            let _ = write!(out, " {:>col_width$}", c);
        }
        out.push('\n');
        for (label, row) in self.rows.iter().zip(&self.cells) {
            let _ = write!(out, "{:<width$}", label);
            for v in row {
                let _ = write!(out, " {:>col_width$.1}", v);
            }
            out.push('\n');
        }
        out
    }
}

/// Scores every head on every dataset's evaluation split. When `pretrained`
/// is given, it holds one head per dataset (same order), each trained on that
/// dataset's own frozen features; it forms a final `Pre-trained` row.
pub fn cross_matrix<R: Features + Sync>(
    heads: &[(String, LinearHead)],
    datasets: &[EvalSet<R>],
    pretrained: Option<&[LinearHead]>,
) -> Result<CrossMatrix> {
    if heads.is_empty() && pretrained.is_none() {
        return Err(Error::EmptyInput("no heads to cross-evaluate"));
    }
    if datasets.is_empty() {
        return Err(Error::EmptyInput("no datasets to cross-evaluate"));
    }
    if let Some(p) = pretrained {
        if p.len() != datasets.len() {
            return Err(Error::ShapeError(format!(
                "{} pre-trained heads for {} datasets",
                p.len(),
                datasets.len()
            )));
        }
    }
    let score = |head: &LinearHead, set: &EvalSet<R>| -> Result<f64> {
        let probs = head.predict_batch(&set.features)?;
        Ok(100.0 * roc_auc(&probs, &set.labels)?)
    };
    let mut rows: Vec<String> = heads.iter().map(|(label, _)| label.clone()).collect();
    if pretrained.is_some() {
        rows.push(PRETRAINED_ROW.to_string());
    }
    let columns = datasets.iter().map(|d| d.name.clone()).collect();
    CrossMatrix::build(rows, columns, |r, c| match heads.get(r) {
        Some((_, head)) => score(head, &datasets[c]),
        None => score(&pretrained.expect("extra row only with pre-trained heads")[c], &datasets[c]),
    })
}
