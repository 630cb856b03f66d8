//! Adam-based pre-training and fine-tuning.
//!
//! One step: for every pair in the batch the student encodes side A (with
//! dropout), the teacher encodes side B on a gradient-free tape, the
//! layer-normalized top-K average of the teacher's block outputs becomes
//! the target, and the batch loss is the unweighted mean cosine distance.
//! Gradients flow to the student only; after the Adam update the teacher
//! tracks the student by EMA. All randomness (shuffling, dropout) is a
//! pure function of (seed, step), which makes checkpoint resume bit-exact.

mod adam;
mod config;
mod run;

pub use adam::adam_step;
pub use config::RunConfig;
pub use run::{finetune, train_loop, train_step, write_loss_curve, LossCurve, DEFAULT_FINETUNE_STEPS};

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{init_model, Checkpoint, EncoderParams, ModelConfig};
use crate::numerics::{Precision, Tensor};

/// Optimizer and schedule settings.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub tau: f64,
    pub grad_clip: f64,
    /// Loss-curve emission cadence (steps); the final step always logs.
    pub log_interval: usize,
    /// Checkpoint cadence (steps); 0 = only the final checkpoint.
    pub checkpoint_interval: usize,
    pub precision: Precision,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.98,
            adam_eps: 1e-8,
            warmup_steps: 500,
            total_steps: 3000,
            batch_size: 32,
            seed: 0,
            tau: 0.999,
            grad_clip: 5.0,
            log_interval: 50,
            checkpoint_interval: 0,
            precision: Precision::F64,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} {b} outside [0, 1)")));
            }
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.adam_eps <= 0.0 {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        Ok(())
    }

    /// Linear warmup to the base rate, then constant.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 {
            return self.learning_rate;
        }
        let ratio = ((step + 1) as f64 / self.warmup_steps as f64).min(1.0);
        self.learning_rate * ratio
    }
}

/// Mutable training state: step counter, both parameter sets, and the
/// Adam moments. Randomness needs no stored state — it derives from
/// (seed, step).
#[derive(Clone, Debug)]
pub struct TrainState {
    pub step: u64,
    pub model_config: ModelConfig,
    pub seed: u64,
    pub student: EncoderParams,
    pub teacher: EncoderParams,
    pub adam_m: Vec<Tensor>,
    pub adam_v: Vec<Tensor>,
}

impl TrainState {
    pub fn new(model_config: ModelConfig, seed: u64) -> Result<Self> {
        let (student, teacher) = init_model(&model_config, seed)?;
        let adam_m: Vec<Tensor> = student
            .learnable()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        let adam_v = adam_m.clone();
        Ok(TrainState {
            step: 0,
            model_config,
            seed,
            student,
            teacher,
            adam_m,
            adam_v,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.model_config.clone(),
            seed: self.seed,
            step: self.step,
            student: self.student.clone(),
            teacher: self.teacher.clone(),
            adam_m: self.adam_m.clone(),
            adam_v: self.adam_v.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Self {
        TrainState {
            step: ckpt.step,
            model_config: ckpt.config,
            seed: ckpt.seed,
            student: ckpt.student,
            teacher: ckpt.teacher,
            adam_m: ckpt.adam_m,
            adam_v: ckpt.adam_v,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_checkpoint(Checkpoint::load(path)?))
    }
}
