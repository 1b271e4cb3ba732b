//! The training loop: split, minibatch Adam, best-validation snapshot.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{mix_seed, DatasetSample};
use crate::error::{Result, SchedError};
use crate::metrics::{metrics_report, MetricsReport, DEFAULT_EPSILON};

use super::batch::{batches_by_length, mean_loss, run_batch, BatchSpec};
use super::params::{AdamConfig, AdamState, ModelGrads, ModelParams};
use super::position_weights;

/// Training hyperparameters. Defaults: hidden 128, batch 128, Adam at
/// 0.001, 20 epochs, 80/10/10 train/test/validation, plain soft-sequence
/// loss, no teacher forcing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub train_fraction: f64,
    pub test_fraction: f64,
    /// Use descending position weights in the loss.
    pub weighted_loss: bool,
    /// Exponentially instead of linearly descending weights (only
    /// meaningful with `weighted_loss`).
    pub exponential_weights: bool,
    /// Feed ground-truth tokens during training instead of the model's
    /// own predictions.
    pub teacher_forcing: bool,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embed_dim: 128,
            hidden_dim: 128,
            batch_size: 128,
            learning_rate: 0.001,
            max_epochs: 20,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            train_fraction: 0.8,
            test_fraction: 0.1,
            weighted_loss: false,
            exponential_weights: false,
            teacher_forcing: false,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    /// Validation fraction is whatever the other two leave over.
    pub fn validation_fraction(&self) -> f64 {
        1.0 - self.train_fraction - self.test_fraction
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(SchedError::InvalidConfig(
                "model dimensions must be positive".into(),
            ));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(SchedError::InvalidConfig(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(SchedError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if !(self.train_fraction > 0.0
            && self.test_fraction > 0.0
            && self.train_fraction + self.test_fraction < 1.0)
        {
            return Err(SchedError::InvalidConfig(
                "split fractions must be positive and sum below 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(SchedError::InvalidConfig(
                "Adam betas must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// What happened during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch (in rollout mode unless teacher
    /// forcing is enabled).
    pub train_losses: Vec<f64>,
    /// Mean validation loss per epoch.
    pub val_losses: Vec<f64>,
    /// Wall clock per epoch; not deterministic.
    pub epoch_seconds: Vec<f64>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    /// Metrics of the returned parameters on the held-out test split.
    pub final_metrics: MetricsReport,
}

/// Deterministic 80/10/10-style split: shuffle `0..n` with the config
/// seed, then cut into train, test, validation in that order.
pub fn split_indices(n: usize, cfg: &TrainConfig) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.rng_seed, 0));
    order.shuffle(&mut rng);
    let n_train = (n as f64 * cfg.train_fraction).floor() as usize;
    let n_test = (n as f64 * cfg.test_fraction).floor() as usize;
    let test_end = (n_train + n_test).min(n);
    let train = order[..n_train].to_vec();
    let test = order[n_train..test_end].to_vec();
    let val = order[test_end..].to_vec();
    (train, test, val)
}

/// Train from scratch and return the parameters of the best-validation
/// epoch together with the loss history and test metrics. Deterministic
/// given the config (wall-clock fields aside).
pub fn train(samples: &[DatasetSample], cfg: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(SchedError::EmptyDataset);
    }
    for s in samples {
        s.validate()?;
    }
    let (train_idx, test_idx, val_idx) = split_indices(samples.len(), cfg);
    if train_idx.is_empty() || test_idx.is_empty() || val_idx.is_empty() {
        return Err(SchedError::InvalidConfig(format!(
            "dataset of {} samples leaves an empty split",
            samples.len()
        )));
    }

    let mut params = ModelParams::init(cfg.embed_dim, cfg.hidden_dim, mix_seed(cfg.rng_seed, 1))?;
    let mut adam = AdamState::new(&params);
    let mut grads = ModelGrads::zeros(&params);
    let mut epoch_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.rng_seed, 2));

    let mut train_losses = Vec::with_capacity(cfg.max_epochs);
    let mut val_losses = Vec::with_capacity(cfg.max_epochs);
    let mut epoch_seconds = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;

    let mut order = train_idx;
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut epoch_rng);
        let mut batches = batches_by_length(&order, samples, cfg.batch_size);
        batches.shuffle(&mut epoch_rng);

        let mut loss_sum = 0.0;
        for (batch_no, batch_idx) in batches.iter().enumerate() {
            let spec: Vec<BatchSpec> =
                batch_idx.iter().map(|&i| BatchSpec::of(&samples[i])).collect();
            let weights = position_weights(
                spec[0].input.len(),
                cfg.weighted_loss,
                cfg.exponential_weights,
            );
            grads.reset();
            let (batch_loss_sum, _) = run_batch(
                &params,
                &spec,
                cfg.teacher_forcing,
                &weights,
                false,
                Some(&mut grads),
            )?;
            if !batch_loss_sum.is_finite() || !grads.all_finite() {
                return Err(SchedError::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            loss_sum += batch_loss_sum;
            adam.apply(&mut params, &grads, &cfg.adam());
        }
        train_losses.push(loss_sum / order.len() as f64);

        let val = mean_loss(
            &params,
            samples,
            &val_idx,
            cfg.teacher_forcing,
            cfg.weighted_loss,
            cfg.exponential_weights,
            cfg.batch_size,
        )?;
        if !val.is_finite() {
            return Err(SchedError::NonFiniteLoss { epoch, batch: 0 });
        }
        val_losses.push(val);
        epoch_seconds.push(started.elapsed().as_secs_f64());

        if best.as_ref().map_or(true, |(b, _, _)| val < *b) {
            best = Some((val, epoch, params.clone()));
        }
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    let test_samples: Vec<DatasetSample> =
        test_idx.iter().map(|&i| samples[i].clone()).collect();
    let predictions = super::batch::predict_batch(&best_params, &test_samples, cfg.batch_size)?;
    let final_metrics = metrics_report(&predictions, DEFAULT_EPSILON)?;

    Ok((
        best_params,
        TrainReport {
            train_losses,
            val_losses,
            epoch_seconds,
            best_epoch,
            final_metrics,
        },
    ))
}
