//! Slanted triangular learning rates: a linear ramp from 0 to the base rate
//! over the warm-up steps, then a linear decay back to 0 at the last step.

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_WARMUP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StlrSchedule {
    base_lr: f64,
    total_steps: usize,
    warmup_steps: usize,
}

impl StlrSchedule {
    pub fn new(base_lr: f64, total_steps: usize, warmup_fraction: f64) -> Result<Self> {
        if total_steps == 0 {
            return Err(Error::InvalidConfig("schedule needs at least one step".into()));
        }
        if !(warmup_fraction > 0.0 && warmup_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "warm-up fraction {warmup_fraction} outside (0, 1)"
            )));
        }
        if !(base_lr.is_finite() && base_lr >= 0.0) {
            return Err(Error::InvalidConfig(format!("base learning rate {base_lr}")));
        }
        Ok(Self {
            base_lr,
            total_steps,
            warmup_steps: ceil_steps(warmup_fraction * total_steps as f64).clamp(1, total_steps),
        })
    }

    pub fn base_lr(&self) -> f64 {
        self.base_lr
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    /// Step at which the rate peaks.
    pub fn warmup_steps(&self) -> usize {
        self.warmup_steps
    }

    pub fn lr_at(&self, step: usize) -> Result<f64> {
        let (total, warm) = (self.total_steps, self.warmup_steps);
        if step > total {
            return Err(Error::InvalidStep { step, total });
        }
        Ok(if step <= warm {
            self.base_lr * (step as f64 / warm as f64)
        } else {
            self.base_lr * ((total - step) as f64 / (total - warm) as f64)
        })
    }
}

/// `ceil`, ignoring representation noise such as `0.1 * 30 = 3.0000000000000004`.
fn ceil_steps(x: f64) -> usize {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        x.ceil() as usize
    }
}
