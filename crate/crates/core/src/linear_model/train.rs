use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::head::{sigmoid, InputKind, LinearHead};
use super::optim::AdamW;
use super::schedule::StlrSchedule;
use super::{Features, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::log_loss;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: u32,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    /// Rate used by the last update of the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedHead {
    pub head: LinearHead,
    pub log: Vec<EpochLog>,
}

/// Mean binary cross-entropy plus `l2 · ‖w‖² / 2`, with its gradient
/// `(∂/∂w, ∂/∂b)`. The bias is not regularized.
pub fn objective<R: Features>(
    weights: &[f64],
    bias: f64,
    xs: &[R],
    ys: &[u8],
    l2: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    check_inputs(xs, ys, weights.len())?;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = bias + x.dot(weights);
        loss += cross_entropy(z, y);
        let residual = sigmoid(z) - y as f64;
        x.for_each_entry(|i, v| grad_w[i] += residual * v);
        grad_b += residual;
    }
    let n = xs.len() as f64;
    let penalty = 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    Ok((loss / n + penalty, grad_w, grad_b / n))
}

/// `−[y ln σ(z) + (1 − y) ln(1 − σ(z))]` without forming σ(z).
fn cross_entropy(z: f64, y: u8) -> f64 {
    let softplus = |t: f64| t.max(0.0) + (-t.abs()).exp().ln_1p();
    if y == 1 {
        softplus(-z)
    } else {
        softplus(z)
    }
}

fn check_inputs<R: Features>(xs: &[R], ys: &[u8], dim: usize) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeError(format!(
            "{} inputs but {} labels",
            xs.len(),
            ys.len()
        )));
    }
    if let Some((i, x)) = xs.iter().enumerate().find(|(_, x)| x.dim() != dim) {
        return Err(Error::ShapeError(format!(
            "input {i} has dimension {}, expected {dim}",
            x.dim()
        )));
    }
    if let Some(&y) = ys.iter().find(|&&y| y > 1) {
        return Err(Error::ShapeError(format!("label {y} is not binary")));
    }
    Ok(())
}

struct Snapshot {
    weights: Vec<f64>,
    bias: f64,
}

/// Runs mini-batch AdamW and returns the parameters after every epoch.
fn fit<R: Features>(
    xs: &[R],
    ys: &[u8],
    valid: Option<(&[R], &[u8])>,
    config: &TrainConfig,
) -> Result<(Vec<Snapshot>, Vec<EpochLog>)> {
    config.validate()?;
    if xs.is_empty() {
        return Err(Error::EmptyInput("no training examples"));
    }
    let dim = xs[0].dim();
    check_inputs(xs, ys, dim)?;
    if let Some((vx, vy)) = valid {
        check_inputs(vx, vy, dim)?;
    }

    let n = xs.len();
    let l2 = config.l2_for(n);
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let schedule = StlrSchedule::new(
        config.base_lr,
        steps_per_epoch * config.max_epochs as usize,
        config.warmup_fraction,
    )?;
    let keep = 1.0 - config.dropout;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Parameter layout: weights[0..dim], bias at dim.
    let mut params = vec![0.0; dim + 1];
    let mut grads = vec![0.0; dim + 1];
    let mut optimizer = AdamW::new(dim + 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut masked: Vec<(usize, f64)> = Vec::new();
    let mut step = 0;
    let mut lr = 0.0;
    let mut snapshots = Vec::with_capacity(config.max_epochs as usize);
    let mut log = Vec::with_capacity(config.max_epochs as usize);

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            step += 1;
            lr = schedule.lr_at(step)?;
            grads.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                masked.clear();
                xs[i].for_each_entry(|j, v| {
                    if config.dropout == 0.0 {
                        masked.push((j, v));
                    } else if rng.gen::<f64>() < keep {
                        masked.push((j, v / keep));
                    }
                });
                let z = params[dim] + masked.iter().map(|&(j, v)| params[j] * v).sum::<f64>();
                let residual = sigmoid(z) - ys[i] as f64;
                for &(j, v) in &masked {
                    grads[j] += residual * v;
                }
                grads[dim] += residual;
            }
            let m = batch.len() as f64;
            for j in 0..dim {
                grads[j] = grads[j] / m + l2 * params[j];
            }
            grads[dim] /= m;
            optimizer.step(&mut params, &grads, lr, config.weight_decay)?;
        }

        let weights = &params[..dim];
        let bias = params[dim];
        let loss_on = |xs: &[R], ys: &[u8]| -> Result<f64> {
            let probs: Vec<f64> = xs.iter().map(|x| sigmoid(bias + x.dot(weights))).collect();
            log_loss(&probs, ys)
        };
        let train_loss = loss_on(xs, ys)?;
        let valid_loss = valid.map(|(vx, vy)| loss_on(vx, vy)).transpose()?;
        log::debug!("epoch {epoch}: train {train_loss:.6} valid {valid_loss:?} lr {lr:e}");
        log.push(EpochLog {
            epoch,
            train_loss,
            valid_loss,
            lr,
        });
        snapshots.push(Snapshot {
            weights: weights.to_vec(),
            bias,
        });
    }
    Ok((snapshots, log))
}

fn to_head(snapshot: &Snapshot, trained_on: &str, input_kind: &InputKind) -> LinearHead {
    LinearHead {
        weights: snapshot.weights.iter().map(|&w| w as f32).collect(),
        bias: snapshot.bias as f32,
        trained_on: trained_on.to_string(),
        input_kind: input_kind.clone(),
    }
}

/// Trains a head for `config.max_epochs` epochs. Shuffling and dropout draw
/// from one ChaCha stream seeded by `config.seed`, so equal inputs and config
/// give bit-identical weights.
pub fn train_head<R: Features>(
    xs: &[R],
    ys: &[u8],
    valid: Option<(&[R], &[u8])>,
    config: &TrainConfig,
    trained_on: &str,
    input_kind: InputKind,
) -> Result<TrainedHead> {
    let (snapshots, log) = fit(xs, ys, valid, config)?;
    let last = snapshots.last().expect("max_epochs >= 1");
    Ok(TrainedHead {
        head: to_head(last, trained_on, &input_kind),
        log,
    })
}

/// Validation losses of one grid entry, one per epoch.
#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub config: TrainConfig,
    pub valid_losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    /// Winning config with `max_epochs` set to the winning epoch.
    pub best: TrainConfig,
    pub best_epoch: u32,
    pub best_loss: f64,
    /// Parameters after `best_epoch` epochs of the winning run.
    pub head: LinearHead,
    /// Epoch log of the winning run up to `best_epoch`.
    pub log: Vec<EpochLog>,
    pub candidates: Vec<Candidate>,
}

/// Index of the candidate and 1-based epoch with the lowest validation loss.
/// Ties go to the lower learning rate, then lower dropout, then fewer epochs,
/// then earlier grid position.
pub fn choose_best(candidates: &[Candidate]) -> Option<(usize, u32)> {
    let mut best: Option<(usize, u32, f64)> = None;
    for (ci, cand) in candidates.iter().enumerate() {
        for (ei, &loss) in cand.valid_losses.iter().enumerate() {
            let epoch = ei as u32 + 1;
            let better = match best {
                None => true,
                Some((bi, be, bl)) => {
                    let other = &candidates[bi].config;
                    loss.total_cmp(&bl)
                        .then(cand.config.base_lr.total_cmp(&other.base_lr))
                        .then(cand.config.dropout.total_cmp(&other.dropout))
                        .then(epoch.cmp(&be))
                        == Ordering::Less
                }
            };
            if better {
                best = Some((ci, epoch, loss));
            }
        }
    }
    best.map(|(i, e, _)| (i, e))
}

/// Trains every grid entry for its full epoch budget and keeps the
/// `(config, epoch)` pair with the lowest validation log-loss.
pub fn select_hyperparams<R: Features>(
    grid: &[TrainConfig],
    train: (&[R], &[u8]),
    valid: (&[R], &[u8]),
    trained_on: &str,
    input_kind: InputKind,
) -> Result<Selection> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("empty hyperparameter grid"));
    }
    if valid.0.is_empty() {
        return Err(Error::EmptyInput("selection needs validation examples"));
    }
    let mut candidates = Vec::with_capacity(grid.len());
    let mut runs = Vec::with_capacity(grid.len());
    for config in grid {
        let (snapshots, log) = fit(train.0, train.1, Some(valid), config)?;
        candidates.push(Candidate {
            config: config.clone(),
            valid_losses: log.iter().filter_map(|e| e.valid_loss).collect(),
        });
        runs.push((snapshots, log));
    }
    let (index, epoch) = choose_best(&candidates).expect("non-empty grid with validation");
    let best_loss = candidates[index].valid_losses[epoch as usize - 1];
    let (snapshots, mut log) = runs.swap_remove(index);
    let head = to_head(&snapshots[epoch as usize - 1], trained_on, &input_kind);
    log.truncate(epoch as usize);
    let best = TrainConfig {
        max_epochs: epoch,
        ..candidates[index].config.clone()
    };
    Ok(Selection {
        best,
        best_epoch: epoch,
        best_loss,
        head,
        log,
        candidates,
    })
}
