use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{loss_and_grad, Example, Model, ModelParams};
use super::{stream_rng, SvaeError};
use crate::neural::{adam_step, clip_global_norm, AdamState, Parameters};

/// Examples per gradient chunk are `ceil(batch / GRAD_CHUNKS)`; chunk sums
/// are added in order so results do not depend on the thread count.
const GRAD_CHUNKS: usize = 8;

/// Step learning rate: `base` until `decay_epoch`, `after` from then on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub decay_epoch: usize,
    pub after: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            base: 1e-3,
            decay_epoch: 10,
            after: 1e-4,
        }
    }
}

impl LrSchedule {
    /// Rate for the 0-based `epoch`.
    pub fn rate(&self, epoch: usize) -> f64 {
        if epoch < self.decay_epoch {
            self.base
        } else {
            self.after
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: LrSchedule,
    pub clip_norm: f64,
    pub seed: u64,
    pub log_every: u64,
    pub teacher_forcing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 512,
            lr: LrSchedule::default(),
            clip_norm: 5.0,
            seed: 1,
            log_every: 100,
            teacher_forcing: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    /// Batches completed, this one included.
    pub step: u64,
    pub epoch: usize,
    pub examples: usize,
    /// Per-example means.
    pub loss: f64,
    pub reconstruction: f64,
    pub kld: f64,
    pub kl_weight: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub lr: f64,
}

/// Mini-batch Adam training over a fixed example set. Examples are visited
/// in a fresh random order each epoch.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub adam: AdamState,
    pub rng: ChaCha8Rng,
    pub step: u64,
    pub epoch: usize,
    order: Vec<usize>,
    cursor: usize,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self, SvaeError> {
        if config.batch_size == 0 {
            return Err(SvaeError::InvalidConfig("batch_size must be positive".into()));
        }
        let adam = AdamState::for_params(&model.params, config.lr.base);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Trainer {
            model,
            config,
            adam,
            rng,
            step: 0,
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
        })
    }

    /// Restores a trainer mid-run; the next batch starts a new epoch.
    pub fn resume(
        model: Model,
        config: TrainConfig,
        adam: AdamState,
        rng: ChaCha8Rng,
        step: u64,
        epoch: usize,
    ) -> Result<Self, SvaeError> {
        let mut t = Trainer::new(model, config)?;
        if adam.m.len() != t.model.params.num_params() {
            return Err(SvaeError::InvalidConfig(
                "optimizer state does not match the model".into(),
            ));
        }
        t.adam = adam;
        t.rng = rng;
        t.step = step;
        t.epoch = epoch;
        Ok(t)
    }

    /// One Adam update on the next batch of `data`.
    pub fn train_batch(&mut self, data: &[Example]) -> Result<BatchStats, SvaeError> {
        if data.is_empty() {
            return Err(SvaeError::EmptyTrainingSet);
        }
        if self.order.len() != data.len() || self.cursor == 0 {
            self.order = (0..data.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.config.batch_size).min(data.len());
        let batch: Vec<(usize, u64)> = self.order[self.cursor..end]
            .iter()
            .map(|&i| (i, self.rng.random()))
            .collect();
        let epoch = self.epoch;
        self.cursor = end;
        if self.cursor == data.len() {
            self.cursor = 0;
            self.epoch += 1;
        }

        let kl_weight = self.model.config.kl_weight(self.step);
        let (mut grads, sums) = self.batch_gradient(data, &batch, kl_weight)?;
        let n = batch.len() as f64;
        grads.scale(1.0 / n);
        let grad_norm = clip_global_norm(&mut grads, self.config.clip_norm);
        self.adam.lr = self.config.lr.rate(epoch);
        adam_step(&mut self.model.params, &grads, &mut self.adam)?;
        self.step += 1;

        let stats = BatchStats {
            step: self.step,
            epoch,
            examples: batch.len(),
            loss: sums[0] / n,
            reconstruction: sums[1] / n,
            kld: sums[2] / n,
            kl_weight,
            grad_norm,
            lr: self.adam.lr,
        };
        if self.config.log_every > 0 && self.step.is_multiple_of(self.config.log_every) {
            info!(
                "step {} epoch {} loss {:.4} recon {:.4} kld {:.4} kl_w {:.3} |g| {:.3}",
                stats.step, stats.epoch, stats.loss, stats.reconstruction, stats.kld, stats.kl_weight, stats.grad_norm
            );
        }
        Ok(stats)
    }

    fn batch_gradient(
        &self,
        data: &[Example],
        batch: &[(usize, u64)],
        kl_weight: f64,
    ) -> Result<(ModelParams, [f64; 3]), SvaeError> {
        let model = &self.model;
        let chunk = batch.len().div_ceil(GRAD_CHUNKS).max(1);
        let partial: Vec<Result<(ModelParams, [f64; 3]), SvaeError>> = batch
            .par_chunks(chunk)
            .map(|items| {
                let mut g = model.params.zeros_like();
                let mut sums = [0.0; 3];
                for &(i, seed) in items {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let l = loss_and_grad(
                        &model.config,
                        &model.params,
                        &model.embeddings,
                        &data[i],
                        kl_weight,
                        &mut rng,
                        self.config.teacher_forcing,
                        Some(&mut g),
                    )?;
                    sums[0] += l.total;
                    sums[1] += l.reconstruction;
                    sums[2] += l.kld;
                }
                Ok((g, sums))
            })
            .collect();
        let mut total = model.params.zeros_like();
        let mut sums = [0.0; 3];
        for part in partial {
            let (g, s) = part?;
            total.add_scaled(&g, 1.0);
            for k in 0..3 {
                sums[k] += s[k];
            }
        }
        Ok((total, sums))
    }

    pub fn train_batches(&mut self, data: &[Example], n: usize) -> Result<Vec<BatchStats>, SvaeError> {
        (0..n).map(|_| self.train_batch(data)).collect()
    }

    /// Trains until the current epoch is complete.
    pub fn train_epoch(&mut self, data: &[Example]) -> Result<Vec<BatchStats>, SvaeError> {
        let start = self.epoch;
        let mut out = Vec::new();
        while self.epoch == start {
            out.push(self.train_batch(data)?);
        }
        Ok(out)
    }

    /// Mean per-example loss with fixed noise, without updating.
    pub fn mean_loss(&self, data: &[Example], seed: u64) -> Result<f64, SvaeError> {
        if data.is_empty() {
            return Err(SvaeError::EmptyTrainingSet);
        }
        let kl_weight = self.model.config.kl_weight(self.step);
        let losses: Vec<Result<f64, SvaeError>> = data
            .par_iter()
            .enumerate()
            .map(|(i, ex)| {
                let mut rng = stream_rng(seed, i as u64);
                self.model.forward_loss(ex, kl_weight, &mut rng, true).map(|l| l.total)
            })
            .collect();
        let mut sum = 0.0;
        for l in losses {
            sum += l?;
        }
        Ok(sum / data.len() as f64)
    }
}
