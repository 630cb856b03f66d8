use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::ModelConfig;

/// Weights of one transformer block.
#[derive(Clone, Debug)]
pub struct LayerParams {
    pub ln1_gamma: Tensor,
    pub ln1_beta: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_gamma: Tensor,
    pub ln2_beta: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// All weights of one encoder. The student and teacher each hold one copy
/// with identical shapes; the positional table is fixed (never learned,
/// never averaged).
#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub input_weight: Tensor,
    pub input_bias: Tensor,
    pub positional: Tensor,
    pub layers: Vec<LayerParams>,
    pub final_gamma: Tensor,
    pub final_beta: Tensor,
}

/// Tensors per block in [`EncoderParams::learnable`] order.
pub const TENSORS_PER_LAYER: usize = 16;

impl EncoderParams {
    /// Learnable tensors in a stable, documented order: input projection,
    /// then per block (ln1 γβ, Wq bq, Wk bk, Wv bv, Wo bo, ln2 γβ, W1 b1,
    /// W2 b2), then the final norm pair.
    pub fn learnable(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("input.weight".into(), &self.input_weight),
            ("input.bias".into(), &self.input_bias),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (suffix, t) in [
                ("ln1.gamma", &l.ln1_gamma),
                ("ln1.beta", &l.ln1_beta),
                ("attn.wq", &l.wq),
                ("attn.bq", &l.bq),
                ("attn.wk", &l.wk),
                ("attn.bk", &l.bk),
                ("attn.wv", &l.wv),
                ("attn.bv", &l.bv),
                ("attn.wo", &l.wo),
                ("attn.bo", &l.bo),
                ("ln2.gamma", &l.ln2_gamma),
                ("ln2.beta", &l.ln2_beta),
                ("ffn.w1", &l.w1),
                ("ffn.b1", &l.b1),
                ("ffn.w2", &l.w2),
                ("ffn.b2", &l.b2),
            ] {
                out.push((format!("layer{i}.{suffix}"), t));
            }
        }
        out.push(("final_norm.gamma".into(), &self.final_gamma));
        out.push(("final_norm.beta".into(), &self.final_beta));
        out
    }

    pub fn learnable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.input_weight, &mut self.input_bias];
        for l in self.layers.iter_mut() {
            out.extend([
                &mut l.ln1_gamma,
                &mut l.ln1_beta,
                &mut l.wq,
                &mut l.bq,
                &mut l.wk,
                &mut l.bk,
                &mut l.wv,
                &mut l.bv,
                &mut l.wo,
                &mut l.bo,
                &mut l.ln2_gamma,
                &mut l.ln2_beta,
                &mut l.w1,
                &mut l.b1,
                &mut l.w2,
                &mut l.b2,
            ]);
        }
        out.push(&mut self.final_gamma);
        out.push(&mut self.final_beta);
        out
    }

    pub fn num_params(&self) -> usize {
        self.learnable().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Closed-form learnable parameter count for a configuration.
    pub fn param_count(config: &ModelConfig) -> usize {
        let d = config.model_dim;
        let f = config.feature_dim;
        let ffn = config.ffn_dim;
        let per_layer = 4 * (d * d + d) + (d * ffn + ffn) + (ffn * d + d) + 4 * d;
        f * d + d + config.layers * per_layer + 2 * d
    }
}

/// Fixed sinusoidal positional table covering positions 0..=max_frames.
fn positional_table(config: &ModelConfig) -> Tensor {
    let d = config.model_dim;
    let rows = config.max_frames + 1;
    let mut data = Vec::with_capacity(rows * d);
    for pos in 0..rows {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let rate = 1.0 / 10_000f64.powf(2.0 * pair / d as f64);
            let angle = pos as f64 * rate;
            data.push(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::new(data, &[rows, d]).expect("consistent dims")
}

/// Normal(0, std) truncated at ±2σ via rejection.
fn truncated_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    loop {
        let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.random();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        if z.abs() <= 2.0 {
            return std * z;
        }
    }
}

fn init_weight(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    // probe hook, removed before finalizing
    let std = std::env::var("CTE_INIT_STD").ok().and_then(|v| v.parse().ok()).unwrap_or(0.02);
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| truncated_normal(rng, std)).collect();
    Tensor::new(data, shape).expect("consistent dims")
}

/// Initialize a student/teacher pair deterministically from a seed. The
/// teacher starts as an exact copy of the student.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<(EncoderParams, EncoderParams)> {
    config.validate()?;
    let d = config.model_dim;
    let f = config.feature_dim;
    let ffn = config.ffn_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut student = EncoderParams {
        input_weight: init_weight(&mut rng, &[f, d]),
        input_bias: Tensor::zeros(&[d]),
        positional: positional_table(config),
        layers: Vec::with_capacity(config.layers),
        final_gamma: Tensor::full(&[d], 1.0),
        final_beta: Tensor::zeros(&[d]),
    };
    for _ in 0..config.layers {
        student.layers.push(LayerParams {
            ln1_gamma: Tensor::full(&[d], 1.0),
            ln1_beta: Tensor::zeros(&[d]),
            wq: init_weight(&mut rng, &[d, d]),
            bq: Tensor::zeros(&[d]),
            wk: init_weight(&mut rng, &[d, d]),
            bk: Tensor::zeros(&[d]),
            wv: init_weight(&mut rng, &[d, d]),
            bv: Tensor::zeros(&[d]),
            wo: init_weight(&mut rng, &[d, d]),
            bo: Tensor::zeros(&[d]),
            ln2_gamma: Tensor::full(&[d], 1.0),
            ln2_beta: Tensor::zeros(&[d]),
            w1: init_weight(&mut rng, &[d, ffn]),
            b1: Tensor::zeros(&[ffn]),
            w2: init_weight(&mut rng, &[ffn, d]),
            b2: Tensor::zeros(&[d]),
        });
    }
    let teacher = student.clone();
    Ok((student, teacher))
}

/// Shape agreement check used by EMA and the optimizer.
pub(crate) fn check_same_shapes(a: &EncoderParams, b: &EncoderParams) -> Result<()> {
    let la = a.learnable();
    let lb = b.learnable();
    if la.len() != lb.len() {
        return Err(Error::Contract(format!(
            "parameter sets differ in size: {} vs {}",
            la.len(),
            lb.len()
        )));
    }
    for ((name, ta), (_, tb)) in la.iter().zip(lb.iter()) {
        if ta.shape() != tb.shape() {
            return Err(Error::Contract(format!(
                "{name}: shape {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
    }
    Ok(())
}
