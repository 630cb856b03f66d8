//! Canned gradient-check suite: every differentiable primitive plus the
//! full training objective on a 2-layer toy model. Used by the CLI
//! `gradcheck` command and the acceptance tests.

use crate::error::Result;
use crate::features::FeatureSequence;
use crate::numerics::{grad_check, l2_norm, GradCheckReport, Tensor};

use super::{
    build_target, cosine_loss_on_tape, encode_features, init_model, ModelConfig, TapedEncoder,
    TokenMode,
};

fn lcg(seed: u64, n: usize) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

/// Toy configuration of the full-objective check: 2 layers, 16 dims,
/// 2 heads, K = 2, sequences of at most 12 frames.
pub fn toy_config() -> ModelConfig {
    ModelConfig {
        layers: 2,
        model_dim: 16,
        ffn_dim: 32,
        heads: 2,
        top_k: 2,
        feature_dim: 8,
        dropout: 0.0,
        max_frames: 12,
        token_mode: TokenMode::Ones,
    }
}

/// Run the whole suite at step `h` and tolerance `tol`; returns one named
/// report per check.
pub fn gradient_suite(h: f64, tol: f64) -> Result<Vec<(String, GradCheckReport)>> {
    let mut out = Vec::new();

    // matmul (both operands) through a quadratic readout
    let a = Tensor::new(lcg(11, 12), &[3, 4])?;
    let b = Tensor::new(lcg(12, 8), &[4, 2])?;
    out.push((
        "matmul".to_string(),
        grad_check(
            |t, ids| {
                let c = t.matmul(ids[0], ids[1])?;
                let sq = t.mul(c, c)?;
                t.sum(sq)
            },
            &[("a".into(), a), ("b".into(), b)],
            h,
            tol,
        )?,
    ));

    // layer norm with affine parameters
    let x = Tensor::new(lcg(13, 10), &[2, 5])?;
    let gamma = Tensor::new(lcg(14, 5).iter().map(|v| 1.0 + 0.2 * v).collect(), &[5])?;
    let beta = Tensor::new(lcg(15, 5), &[5])?;
    out.push((
        "layer_norm".to_string(),
        grad_check(
            |t, ids| {
                let ln = t.layer_norm(ids[0], Some(ids[1]), Some(ids[2]), 1e-5)?;
                let w = t.constant(Tensor::new(lcg(16, 10), &[2, 5])?);
                let p = t.mul(ln, w)?;
                t.sum(p)
            },
            &[
                ("x".into(), x),
                ("gamma".into(), gamma),
                ("beta".into(), beta),
            ],
            h,
            tol,
        )?,
    ));

    // masked softmax
    let s = Tensor::new(lcg(17, 8), &[2, 4])?;
    out.push((
        "softmax".to_string(),
        grad_check(
            |t, ids| {
                let mask = std::sync::Arc::new(vec![true, true, false, true, true, true, true, false]);
                let sm = t.softmax_rows(ids[0], Some(mask))?;
                let w = t.constant(Tensor::new(lcg(18, 8), &[2, 4])?);
                let p = t.mul(sm, w)?;
                t.sum(p)
            },
            &[("scores".into(), s)],
            h,
            tol,
        )?,
    ));

    // exact GELU
    let g = Tensor::new(lcg(19, 9).iter().map(|v| 3.0 * v).collect(), &[9])?;
    out.push((
        "gelu".to_string(),
        grad_check(
            |t, ids| {
                let y = t.gelu(ids[0])?;
                let sq = t.mul(y, y)?;
                t.sum(sq)
            },
            &[("x".into(), g)],
            h,
            tol,
        )?,
    ));

    // cosine loss against a fixed target
    let v = Tensor::new(lcg(20, 6), &[6])?;
    let target = lcg(21, 6);
    debug_assert!(l2_norm(&target) > 1e-3);
    out.push((
        "cosine_loss".to_string(),
        grad_check(
            move |t, ids| cosine_loss_on_tape(t, ids[0], &target),
            &[("v".into(), v)],
            h,
            tol,
        )?,
    ));

    // full objective on the toy model
    let config = toy_config();
    let (student, teacher) = init_model(&config, 2024)?;
    let feats_a = FeatureSequence::from_raw(lcg(22, 11 * 8), 11, 8)?;
    let feats_b = FeatureSequence::from_raw(lcg(23, 9 * 8), 9, 8)?;
    let mut teacher_tape = crate::numerics::Tape::new(crate::numerics::Precision::F64);
    let tenc = TapedEncoder::stage(&mut teacher_tape, &teacher, false);
    let tout = encode_features(&mut teacher_tape, &tenc, &config, &feats_b, None)?;
    let layer_vecs: Vec<Vec<f64>> = tout
        .layer_firsts
        .iter()
        .map(|&id| teacher_tape.data(id).to_vec())
        .collect();
    let target = build_target(&layer_vecs, config.top_k)?;
    let params: Vec<(String, Tensor)> = student
        .learnable()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    let positional = student.positional.clone();
    out.push((
        "full_objective".to_string(),
        grad_check(
            move |tape, ids| {
                let enc = TapedEncoder::from_leaf_ids(ids, positional.clone());
                let eout = encode_features(tape, &enc, &config, &feats_a, None)?;
                cosine_loss_on_tape(tape, eout.v, &target)
            },
            &params,
            h,
            tol,
        )?,
    ));

    Ok(out)
}
