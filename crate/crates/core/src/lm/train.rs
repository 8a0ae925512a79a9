//! Minibatch gradient descent shared by every trainer in the crate.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};
use crate::scalar::Scalar;
use crate::tensor::Params;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Schedule {
    Constant,
    #[default]
    Cosine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: Schedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 4,
            batch_size: 32,
            seed: 1,
            schedule: Schedule::Cosine,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }

    /// Seed for model initialization.
    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, 0)
    }

    fn shuffle_seed(&self) -> u64 {
        derive_seed(self.seed, 1)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean loss on the monitoring subset before the first update.
    pub initial_loss: f64,
    /// Mean loss on the monitoring subset after the last update.
    pub final_loss: f64,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// `lr · ½(1 + cos(π·step/total))` for the cosine schedule.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    base * 0.5 * (1.0 + (PI * step as f64 / total as f64).cos())
}

const MONITOR_SAMPLES: usize = 2048;

/// Runs shuffled minibatch SGD over `n_samples` examples.
///
/// `sample_grad(model, i, grads)` returns the loss of example `i` and adds
/// its gradient into `grads`. Batch gradients are averaged.
pub(crate) fn run_sgd<S, M, F>(
    model: &mut M,
    n_samples: usize,
    cfg: &TrainConfig,
    mut sample_grad: F,
) -> Result<TrainReport>
where
    S: Scalar,
    M: Params<S> + Clone,
    F: FnMut(&M, usize, &mut M) -> f64,
{
    cfg.validate()?;
    let mut grads = model.clone();
    let monitor: Vec<usize> = if n_samples <= MONITOR_SAMPLES {
        (0..n_samples).collect()
    } else {
        (0..MONITOR_SAMPLES)
            .map(|i| i * n_samples / MONITOR_SAMPLES)
            .collect()
    };
    let monitor_loss = |m: &M, grads: &mut M, sample_grad: &mut F| -> f64 {
        if monitor.is_empty() {
            return 0.0;
        }
        grads.fill_zero();
        let total: f64 = monitor.iter().map(|&i| sample_grad(m, i, grads)).sum();
        total / monitor.len() as f64
    };

    let initial_loss = monitor_loss(model, &mut grads, &mut sample_grad);
    if !initial_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0, step: 0 });
    }
    let mut report = TrainReport {
        initial_loss,
        final_loss: initial_loss,
        ..Default::default()
    };
    if cfg.epochs == 0 || n_samples == 0 {
        return Ok(report);
    }

    let batches_per_epoch = n_samples.div_ceil(cfg.batch_size);
    let total_steps = batches_per_epoch * cfg.epochs;
    let mut order: Vec<usize> = (0..n_samples).collect();
    let mut rng = Rng::new(cfg.shuffle_seed());
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss += sample_grad(model, i, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            epoch_loss += batch_loss;
            let lr = match cfg.schedule {
                Schedule::Constant => cfg.learning_rate,
                Schedule::Cosine => cosine_lr(cfg.learning_rate, step, total_steps),
            };
            grads.scale(S::cast(1.0 / batch.len() as f64));
            model.sgd_step(&grads, S::cast(lr));
            step += 1;
        }
        report.epoch_losses.push(epoch_loss / n_samples as f64);
    }
    report.steps = step;
    report.final_loss = monitor_loss(model, &mut grads, &mut sample_grad);
    if !report.final_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: cfg.epochs,
            step,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0.2, 0, 10), 0.2);
        assert!((cosine_lr(0.2, 5, 10) - 0.1).abs() < 1e-15);
        assert!(cosine_lr(0.2, 10, 10).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
