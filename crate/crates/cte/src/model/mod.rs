//! The correspondence transformer encoder: a student/teacher pair of
//! pre-norm transformer encoders over log-Mel frames.
//!
//! An all-ones (or all-zeros) vector is prepended to the feature sequence
//! and the position-0 output vector is the word embedding. During training
//! the student encodes one instance of a word and is pulled, by cosine
//! loss, toward a target built from the teacher's encoding of a second
//! instance: the layer-normalized average of the teacher's top-K block
//! outputs at position 0. The teacher's weights are an exponential moving
//! average of the student's.

mod checkpoint;
mod ema;
mod encoder;
mod objective;
mod params;
mod suite;

pub use checkpoint::Checkpoint;
pub use ema::ema_update;
pub use encoder::{
    encode_batch, encode_features, encode_padded, EncodeOutput, SegmentOutput, TapedEncoder,
};
pub use objective::{build_target, cosine_loss, cosine_loss_on_tape};
pub use params::{init_model, EncoderParams, LayerParams};
pub use suite::{gradient_suite, toy_config};

use crate::error::{Error, Result};

/// Fixed-dimensional word embedding: the position-0 output vector of the
/// student encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Value of the prepended first-timestep token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TokenMode {
    #[default]
    Ones,
    Zeros,
}

impl TokenMode {
    pub fn fill(&self) -> f64 {
        match self {
            TokenMode::Ones => 1.0,
            TokenMode::Zeros => 0.0,
        }
    }
}

/// Architecture hyperparameters shared by the student and teacher.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Transformer blocks L.
    pub layers: usize,
    /// Model width D; also the embedding dimension.
    pub model_dim: usize,
    /// Inner feed-forward width.
    pub ffn_dim: usize,
    /// Attention heads; must divide `model_dim`.
    pub heads: usize,
    /// How many top blocks the teacher target averages (K).
    pub top_k: usize,
    /// Input feature dimension (80 log-Mel bands).
    pub feature_dim: usize,
    /// Dropout probability on sublayer outputs; student side, training only.
    pub dropout: f64,
    /// Longest supported frame sequence (positions 0..=max_frames exist,
    /// position 0 being the prepended token).
    pub max_frames: usize,
    pub token_mode: TokenMode,
}

impl ModelConfig {
    pub fn small() -> Self {
        ModelConfig {
            layers: 6,
            model_dim: 256,
            ffn_dim: 1024,
            heads: 4,
            top_k: 4,
            ..Self::defaults()
        }
    }

    pub fn base() -> Self {
        ModelConfig {
            layers: 12,
            model_dim: 512,
            ffn_dim: 2048,
            heads: 8,
            top_k: 8,
            ..Self::defaults()
        }
    }

    fn defaults() -> Self {
        ModelConfig {
            layers: 0,
            model_dim: 0,
            ffn_dim: 0,
            heads: 1,
            top_k: 0,
            feature_dim: 80,
            dropout: 0.1,
            max_frames: 201,
            token_mode: TokenMode::Ones,
        }
    }

    /// Desk-scale configuration used by the end-to-end experiment.
    pub fn desk() -> Self {
        ModelConfig {
            layers: 4,
            model_dim: 128,
            ffn_dim: 512,
            heads: 4,
            top_k: 3,
            ..Self::defaults()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.feature_dim == 0 || self.max_frames == 0 {
            return Err(Error::Config("zero model/feature/max_frames extent".into()));
        }
        if self.heads == 0 || self.model_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {} not divisible by heads {}",
                self.model_dim, self.heads
            )));
        }
        if self.layers == 0 {
            // degenerate test-only configuration
            if self.top_k != 0 {
                return Err(Error::Config("top_k must be 0 when layers is 0".into()));
            }
        } else if self.top_k == 0 || self.top_k > self.layers {
            return Err(Error::Config(format!(
                "top_k {} outside 1..={}",
                self.top_k, self.layers
            )));
        }
        if self.layers > 0 && self.ffn_dim == 0 {
            return Err(Error::Config("ffn_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }
}
