//! Minimal dense-tensor numerics with reverse-mode automatic differentiation.
//!
//! A [`Tape`] records a computation graph per forward pass; [`Tape::backward`]
//! fills per-leaf gradient accumulators. Everything the transformer
//! forward/backward needs is here: GEMM (normal and transposed variants),
//! layer norm, masked row softmax, exact GELU, and the handful of
//! elementwise ops the cosine loss is built from.
//!
//! Two precision modes exist per tape and are never mixed inside one graph:
//! `F64` for gradient checking and the reproducibility runs, `F32` which
//! rounds every op result to f32 precision.

mod gradcheck;
mod kernels;
pub mod special;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckEntry, GradCheckReport};
pub use kernels::{gemm, gemm_nn, row_moments};
pub use tape::{Precision, Tape, TensorId};
pub use tensor::Tensor;

/// Parameter-free layer normalization of a plain vector (biased variance).
pub fn layer_norm_vec(x: &[f64], eps: f64) -> Vec<f64> {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv = 1.0 / (var + eps).sqrt();
    x.iter().map(|v| (v - mean) * inv).collect()
}

/// Cosine similarity of two equal-length vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let denom = (na * nb).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

/// Euclidean norm.
pub fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
