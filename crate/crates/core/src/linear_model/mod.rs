//! Logistic-regression head over fixed document representations, trained
//! with AdamW under a slanted triangular learning-rate schedule.

mod head;
mod optim;
mod schedule;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pooling::DocumentEmbedding;
use crate::tfidf::SparseVector;

pub use head::{predict_proba, sigmoid, InputKind, LinearHead, HEAD_MAGIC};
pub use optim::{AdamW, BETA1, BETA2, EPSILON};
pub use schedule::{StlrSchedule, DEFAULT_WARMUP_FRACTION};
pub use train::{
    choose_best, objective, select_hyperparams, train_head, Candidate, EpochLog, Selection,
    TrainedHead,
};

/// A document representation the head can consume.
pub trait Features {
    fn dim(&self) -> usize;

    /// Calls `f(index, value)` for every stored entry.
    fn for_each_entry<F: FnMut(usize, f64)>(&self, f: F);

    fn dot(&self, weights: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.for_each_entry(|i, x| acc += weights[i] * x);
        acc
    }
}

impl Features for [f32] {
    fn dim(&self) -> usize {
        self.len()
    }

    fn for_each_entry<F: FnMut(usize, f64)>(&self, mut f: F) {
        for (i, &x) in self.iter().enumerate() {
            f(i, x as f64);
        }
    }
}

impl Features for Vec<f32> {
    fn dim(&self) -> usize {
        self.len()
    }

    fn for_each_entry<F: FnMut(usize, f64)>(&self, f: F) {
        self.as_slice().for_each_entry(f)
    }
}

impl Features for DocumentEmbedding {
    fn dim(&self) -> usize {
        self.data.len()
    }

    fn for_each_entry<F: FnMut(usize, f64)>(&self, f: F) {
        self.data.as_slice().for_each_entry(f)
    }
}

impl Features for SparseVector {
    fn dim(&self) -> usize {
        SparseVector::dim(self)
    }

    fn for_each_entry<F: FnMut(usize, f64)>(&self, mut f: F) {
        for &(i, x) in self.entries() {
            f(i as usize, x as f64);
        }
    }
}

fn default_base_lr() -> f64 {
    0.05
}
fn default_max_epochs() -> u32 {
    4
}
fn default_batch_size() -> usize {
    32
}
fn default_warmup() -> f64 {
    DEFAULT_WARMUP_FRACTION
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_base_lr")]
    pub base_lr: f64,
    /// Input dropout probability, training only.
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: u32,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Coefficient of `‖w‖² / 2`; `None` means `1 / n_train`.
    #[serde(default)]
    pub l2: Option<f64>,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: default_base_lr(),
            dropout: 0.0,
            weight_decay: 0.0,
            max_epochs: default_max_epochs(),
            batch_size: default_batch_size(),
            seed: 0,
            l2: None,
            warmup_fraction: DEFAULT_WARMUP_FRACTION,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return fail(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return fail(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(1..=4).contains(&self.max_epochs) {
            return fail(format!("max_epochs must be in 1..=4, got {}", self.max_epochs));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if let Some(l2) = self.l2 {
            if !(l2.is_finite() && l2 >= 0.0) {
                return fail(format!("l2 must be >= 0, got {l2}"));
            }
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return fail(format!("warmup_fraction must lie in (0, 1), got {}", self.warmup_fraction));
        }
        Ok(())
    }

    pub fn l2_for(&self, n_train: usize) -> f64 {
        self.l2.unwrap_or(1.0 / n_train.max(1) as f64)
    }

    /// The fine-tuning grid: base rates {2.5e-5, 5e-5} × dropout {0, 0.1},
    /// up to four epochs each.
    pub fn paper_finetune_grid() -> Vec<TrainConfig> {
        let mut grid = Vec::with_capacity(4);
        for base_lr in [2.5e-5, 5e-5] {
            for dropout in [0.0, 0.1] {
                grid.push(TrainConfig {
                    base_lr,
                    dropout,
                    max_epochs: 4,
                    ..TrainConfig::default()
                });
            }
        }
        grid
    }

    /// Looks up a named grid preset.
    pub fn preset(name: &str) -> Result<Vec<TrainConfig>> {
        match name {
            "paper-finetune-grid" => Ok(Self::paper_finetune_grid()),
            other => Err(Error::InvalidConfig(format!("unknown grid preset `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_and_dense_dot_agree() {
        let dense = vec![0.0f32, 2.0, 0.0, -1.0];
        let sparse = SparseVector::from_entries(4, vec![(1, 2.0), (3, -1.0)]).unwrap();
        let w = [1.0, 0.5, 3.0, 2.0];
        assert_eq!(dense.dot(&w), sparse.dot(&w));
        assert_eq!(Features::dim(&sparse), 4);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = |f: fn(&mut TrainConfig)| {
            let mut c = TrainConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.dropout = 1.0));
        assert!(bad(|c| c.max_epochs = 5));
        assert!(bad(|c| c.max_epochs = 0));
        assert!(bad(|c| c.base_lr = 0.0));
        assert!(bad(|c| c.batch_size = 0));
        assert!(bad(|c| c.l2 = Some(-1.0)));
    }

    #[test]
    fn paper_grid() {
        let grid = TrainConfig::preset("paper-finetune-grid").unwrap();
        let pairs: Vec<_> = grid.iter().map(|c| (c.base_lr, c.dropout)).collect();
        assert_eq!(pairs, [(2.5e-5, 0.0), (2.5e-5, 0.1), (5e-5, 0.0), (5e-5, 0.1)]);
        assert!(grid.iter().all(|c| c.max_epochs == 4 && c.validate().is_ok()));
        assert!(TrainConfig::preset("nope").is_err());
    }

    #[test]
    fn toml_defaults() {
        let c: TrainConfig = toml::from_str("base_lr = 0.1\ndropout = 0.1\n").unwrap();
        assert_eq!(c.base_lr, 0.1);
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.l2, None);
        assert!(toml::from_str::<TrainConfig>("learning_rate = 1").is_err());
    }
}
