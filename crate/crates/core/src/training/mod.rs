//! Pre-training and fine-tuning loops with warm-up scheduling,
//! checkpointing and deterministic resumption.

pub mod loops;
pub mod state;

pub use loops::{
    finetune, pretrain, schedule_for, validation_pmt_loss, LogEntry, PretrainOutput, RunOptions,
};
pub use state::TrainState;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_steps: u64,
    pub warmup_steps: u64,
    pub base_lr: f64,
    pub finetune_lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub log_every: u64,
    pub ckpt_every: u64,
    /// global-norm gradient clip
    pub clip_norm: f64,
    /// validation cadence during fine-tuning
    pub eval_every: u64,
    /// batch-size multipliers for the sparsely scheduled pre-training
    /// tasks: a 9:2:1 schedule gives ISM/ATTP few optimizer steps, so
    /// their batches can be widened without touching the step mix
    pub ism_batch_multiplier: usize,
    pub attp_batch_multiplier: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_steps: 2_000,
            warmup_steps: 100,
            base_lr: 1e-4,
            finetune_lr: 6e-5,
            batch_size: 16,
            seed: 0,
            log_every: 50,
            ckpt_every: 500,
            clip_norm: 1.0,
            eval_every: 100,
            ism_batch_multiplier: 1,
            attp_batch_multiplier: 1,
        }
    }
}

impl TrainConfig {
    /// Paper-scale schedule lengths.
    pub fn paper() -> Self {
        TrainConfig {
            max_steps: 250_000,
            warmup_steps: 10_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps > self.max_steps {
            return Err(Error::Config("warmup_steps exceeds max_steps".into()));
        }
        if self.base_lr <= 0.0 || self.finetune_lr <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.ism_batch_multiplier == 0 || self.attp_batch_multiplier == 0 {
            return Err(Error::Config("task batch multipliers must be positive".into()));
        }
        Ok(())
    }
}

/// Linear warm-up to base_lr over warmup_steps, then inverse-square-root
/// decay: base_lr * min(step/warmup, sqrt(warmup/step)).
pub fn lr_at(step: u64, cfg: &TrainConfig) -> f64 {
    let w = cfg.warmup_steps.max(1) as f64;
    let s = step.max(1) as f64;
    cfg.base_lr * (s / w).min((w / s).sqrt())
}
