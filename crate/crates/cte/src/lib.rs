//! Correspondence transformer encoder for acoustic word embeddings.
//!
//! Maps variable-length acoustic word segments to fixed-dimensional
//! embeddings with a teacher-student pair of transformer encoders: the
//! student is trained by gradient descent to predict a layer-normalized
//! average of the teacher's top-K block outputs for a different instance
//! of the same word, and the teacher tracks the student by exponential
//! moving average. Only the student is used at inference time.
//!
//! The crate is organized along the pipeline:
//!
//! - [`numerics`]: dense tensors plus reverse-mode autodiff and gradient
//!   checking; everything downstream is built on it.
//! - [`features`]: WAV ingestion and 80-dim log-Mel filterbank extraction.
//! - [`dataset`]: alignment/pair manifests, same-word pair construction,
//!   deterministic batching with masks.
//! - [`model`]: the encoder pair, prediction target, cosine loss, and EMA
//!   update, plus bit-exact checkpoints.
//! - [`trainer`]: Adam training and fine-tuning loops.
//! - [`eval`]: embedding extraction, the same-different task (ROC and PR
//!   average precision), phone-edit-distance analysis, PCA projection,
//!   collapse diagnostics, and the downsampling/DTW baselines.
//! - [`synth`]: a deterministic synthetic word corpus generator for
//!   end-to-end experiments without licensed speech data.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod numerics;
pub mod synth;
pub mod trainer;

pub use dataset::{Batch, Split, WordPair, WordSegment};
pub use error::{Error, Result};
pub use eval::{EvalSegment, SameDiffResult};
pub use features::{FeatureSequence, FrontendConfig, Waveform};
pub use model::{Embedding, EncoderParams, ModelConfig, TokenMode};
pub use numerics::{Precision, Tape, Tensor, TensorId};
pub use synth::CorpusSpec;
pub use trainer::{OptimConfig, RunConfig, TrainState};
