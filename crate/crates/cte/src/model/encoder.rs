use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::numerics::{Tape, Tensor, TensorId};

use super::params::TENSORS_PER_LAYER;
use super::{EncoderParams, ModelConfig};

/// Encoder weights staged onto a tape as leaves.
pub struct TapedEncoder {
    pub input_weight: TensorId,
    pub input_bias: TensorId,
    pub layers: Vec<TapedLayer>,
    pub final_gamma: TensorId,
    pub final_beta: TensorId,
    positional: Tensor,
}

pub struct TapedLayer {
    pub ln1_gamma: TensorId,
    pub ln1_beta: TensorId,
    pub wq: TensorId,
    pub bq: TensorId,
    pub wk: TensorId,
    pub bk: TensorId,
    pub wv: TensorId,
    pub bv: TensorId,
    pub wo: TensorId,
    pub bo: TensorId,
    pub ln2_gamma: TensorId,
    pub ln2_beta: TensorId,
    pub w1: TensorId,
    pub b1: TensorId,
    pub w2: TensorId,
    pub b2: TensorId,
}

impl TapedEncoder {
    /// Stage parameters as leaves; `trainable` controls requires_grad.
    pub fn stage(tape: &mut Tape, params: &EncoderParams, trainable: bool) -> Self {
        let ids: Vec<TensorId> = params
            .learnable()
            .into_iter()
            .map(|(_, t)| tape.leaf(t.clone(), trainable))
            .collect();
        Self::from_leaf_ids(&ids, params.positional.clone())
    }

    /// Rebuild the structured view from leaves in [`EncoderParams::learnable`]
    /// order (used by grad_check, which creates the leaves itself).
    pub fn from_leaf_ids(ids: &[TensorId], positional: Tensor) -> Self {
        let layers = (ids.len() - 4) / TENSORS_PER_LAYER;
        let mut taped_layers = Vec::with_capacity(layers);
        for l in 0..layers {
            let b = 2 + l * TENSORS_PER_LAYER;
            taped_layers.push(TapedLayer {
                ln1_gamma: ids[b],
                ln1_beta: ids[b + 1],
                wq: ids[b + 2],
                bq: ids[b + 3],
                wk: ids[b + 4],
                bk: ids[b + 5],
                wv: ids[b + 6],
                bv: ids[b + 7],
                wo: ids[b + 8],
                bo: ids[b + 9],
                ln2_gamma: ids[b + 10],
                ln2_beta: ids[b + 11],
                w1: ids[b + 12],
                b1: ids[b + 13],
                w2: ids[b + 14],
                b2: ids[b + 15],
            });
        }
        TapedEncoder {
            input_weight: ids[0],
            input_bias: ids[1],
            layers: taped_layers,
            final_gamma: ids[ids.len() - 2],
            final_beta: ids[ids.len() - 1],
            positional,
        }
    }

    /// Leaf ids in learnable order, for gradient readout.
    pub fn grad_ids(&self) -> Vec<TensorId> {
        let mut ids = vec![self.input_weight, self.input_bias];
        for l in &self.layers {
            ids.extend([
                l.ln1_gamma, l.ln1_beta, l.wq, l.bq, l.wk, l.bk, l.wv, l.bv, l.wo, l.bo,
                l.ln2_gamma, l.ln2_beta, l.w1, l.b1, l.w2, l.b2,
            ]);
        }
        ids.push(self.final_gamma);
        ids.push(self.final_beta);
        ids
    }
}

/// Outputs of one encode pass.
pub struct EncodeOutput {
    /// Position-0 vector after each block (pre final norm), v_1..v_L.
    pub layer_firsts: Vec<TensorId>,
    /// Final sequence after the closing layer norm, (T+1)×D.
    pub final_seq: TensorId,
    /// Position-0 vector of `final_seq`: the word embedding.
    pub v: TensorId,
}

const LN_EPS: f64 = 1e-5;

/// Encode a raw feature segment: prepends the configured token row, builds
/// an all-true mask, and runs the encoder.
pub fn encode_features(
    tape: &mut Tape,
    enc: &TapedEncoder,
    config: &ModelConfig,
    features: &FeatureSequence,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<EncodeOutput> {
    let t = features.num_frames();
    let f = features.dim();
    if f != config.feature_dim {
        return Err(Error::Dimension(format!(
            "features have {f} dims, model expects {}",
            config.feature_dim
        )));
    }
    let mut data = Vec::with_capacity((t + 1) * f);
    data.extend(std::iter::repeat_n(config.token_mode.fill(), f));
    data.extend_from_slice(features.data());
    let tokens = Tensor::new(data, &[t + 1, f])?;
    let mask = vec![true; t + 1];
    encode_tokens(tape, enc, config, tokens, &mask, dropout_rng)
}

/// Encode one padded batch row. `row` already contains the token at
/// position 0 and zeros at masked positions; `mask` marks real positions.
pub fn encode_padded(
    tape: &mut Tape,
    enc: &TapedEncoder,
    config: &ModelConfig,
    row: &[f64],
    mask: &[bool],
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<EncodeOutput> {
    let f = config.feature_dim;
    if row.len() != mask.len() * f {
        return Err(Error::Dimension(format!(
            "row of {} values does not match mask of {} positions × {f} dims",
            row.len(),
            mask.len()
        )));
    }
    let tokens = Tensor::new(row.to_vec(), &[mask.len(), f])?;
    encode_tokens(tape, enc, config, tokens, mask, dropout_rng)
}

fn maybe_dropout(
    tape: &mut Tape,
    x: TensorId,
    p: f64,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> Result<TensorId> {
    let Some(rng) = rng.as_deref_mut() else {
        return Ok(x);
    };
    if p == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - p);
    let numel = tape.value(x).numel();
    let mask: Vec<f64> = (0..numel)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let shape = tape.shape(x).to_vec();
    let m = tape.constant(Tensor::new(mask, &shape)?);
    tape.mul(x, m)
}

/// Per-segment outputs of a packed batch encode.
pub struct SegmentOutput {
    /// Position-0 vector after each block, v_1..v_L.
    pub layer_firsts: Vec<TensorId>,
    /// The word embedding (position-0 of the final normed output).
    pub v: TensorId,
}

/// Encode a whole batch on one tape by packing the sequences into a tall
/// matrix: row-wise ops and projections run as single full-size kernels,
/// attention is block-diagonal over the segments. Each row set must be a
/// full real sequence (token at position 0, no padding). Gradients for
/// every pair accumulate through the shared parameter leaves.
pub fn encode_batch(
    tape: &mut Tape,
    enc: &TapedEncoder,
    config: &ModelConfig,
    rows: &[&[f64]],
    dropout_seeds: Option<&[u64]>,
) -> Result<Vec<SegmentOutput>> {
    if let Some(seeds) = dropout_seeds {
        if seeds.len() != rows.len() {
            return Err(Error::Dimension(format!(
                "{} dropout seeds for {} segments",
                seeds.len(),
                rows.len()
            )));
        }
    }
    if rows.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let f = config.feature_dim;
    let d = config.model_dim;
    let mut segments: Vec<(usize, usize)> = Vec::with_capacity(rows.len());
    let mut total = 0usize;
    for row in rows {
        if row.is_empty() || row.len() % f != 0 {
            return Err(Error::Dimension(format!(
                "segment of {} values is not a multiple of {f} dims",
                row.len()
            )));
        }
        let seq = row.len() / f;
        if seq > config.max_frames + 1 || seq > enc.positional.shape()[0] {
            return Err(Error::Input(format!(
                "sequence of {} frames exceeds max_frames {}",
                seq - 1,
                config.max_frames
            )));
        }
        segments.push((total, seq));
        total += seq;
    }

    let mut packed = Vec::with_capacity(total * f);
    for row in rows {
        packed.extend_from_slice(row);
    }
    let input = tape.constant(Tensor::new(packed, &[total, f])?);
    let projected = tape.linear(input, enc.input_weight, enc.input_bias)?;
    let mut pos = Vec::with_capacity(total * d);
    for &(_, seq) in &segments {
        pos.extend_from_slice(&enc.positional.data()[..seq * d]);
    }
    let pos = tape.constant(Tensor::new(pos, &[total, d])?);
    let mut x = tape.add(projected, pos)?;

    let scale = 1.0 / (config.head_dim() as f64).sqrt();
    let mut site = 0u64;
    let mut per_layer_firsts: Vec<Vec<TensorId>> = vec![Vec::new(); segments.len()];
    for layer in &enc.layers {
        let h = tape.layer_norm(x, Some(layer.ln1_gamma), Some(layer.ln1_beta), LN_EPS)?;
        let q = tape.linear(h, layer.wq, layer.bq)?;
        let k = tape.linear(h, layer.wk, layer.bk)?;
        let v = tape.linear(h, layer.wv, layer.bv)?;
        let ctx = tape.attention_packed(q, k, v, config.heads, scale, &segments)?;
        let attn_out = tape.linear(ctx, layer.wo, layer.bo)?;
        let attn_out =
            packed_dropout(tape, attn_out, config.dropout, dropout_seeds, &segments, &mut site)?;
        x = tape.add(x, attn_out)?;

        let h2 = tape.layer_norm(x, Some(layer.ln2_gamma), Some(layer.ln2_beta), LN_EPS)?;
        let f1 = tape.linear(h2, layer.w1, layer.b1)?;
        let f1 = tape.gelu(f1)?;
        let f2 = tape.linear(f1, layer.w2, layer.b2)?;
        let f2 = packed_dropout(tape, f2, config.dropout, dropout_seeds, &segments, &mut site)?;
        x = tape.add(x, f2)?;

        for (si, &(off, _)) in segments.iter().enumerate() {
            per_layer_firsts[si].push(tape.row(x, off)?);
        }
    }
    let final_seq = tape.layer_norm(x, Some(enc.final_gamma), Some(enc.final_beta), LN_EPS)?;
    segments
        .iter()
        .zip(per_layer_firsts)
        .map(|(&(off, _), layer_firsts)| {
            Ok(SegmentOutput {
                layer_firsts,
                v: tape.row(final_seq, off)?,
            })
        })
        .collect()
}

/// Inverted dropout over a packed tensor: each segment draws its mask from
/// its own seed mixed with a per-site counter, so masks do not depend on
/// how pairs are partitioned across tapes or threads.
fn packed_dropout(
    tape: &mut Tape,
    x: TensorId,
    p: f64,
    seeds: Option<&[u64]>,
    segments: &[(usize, usize)],
    site: &mut u64,
) -> Result<TensorId> {
    let Some(seeds) = seeds else {
        return Ok(x);
    };
    if p == 0.0 {
        return Ok(x);
    }
    *site += 1;
    let this_site = *site;
    let keep = 1.0 / (1.0 - p);
    let shape = tape.shape(x).to_vec();
    let width = shape[1];
    let numel = tape.value(x).numel();
    let mut mask = Vec::with_capacity(numel);
    for (si, &(_, len)) in segments.iter().enumerate() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(crate::dataset::derive_seed(seeds[si], this_site));
        mask.extend((0..len * width).map(|_| {
            if rng.random::<f64>() < p {
                0.0
            } else {
                keep
            }
        }));
    }
    let m = tape.constant(Tensor::new(mask, &shape)?);
    tape.mul(x, m)
}

fn encode_tokens(
    tape: &mut Tape,
    enc: &TapedEncoder,
    config: &ModelConfig,
    tokens: Tensor,
    mask: &[bool],
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<EncodeOutput> {
    let seq = tokens.shape()[0];
    if seq < 1 {
        return Err(Error::Input("empty sequence".into()));
    }
    if seq > config.max_frames + 1 || seq > enc.positional.shape()[0] {
        return Err(Error::Input(format!(
            "sequence of {} frames exceeds max_frames {}",
            seq - 1,
            config.max_frames.min(enc.positional.shape()[0] - 1)
        )));
    }
    if !mask[0] {
        return Err(Error::Contract("position 0 (token) must be unmasked".into()));
    }
    let d = config.model_dim;
    let dh = config.head_dim();

    let input = tape.constant(tokens);
    let projected = tape.linear(input, enc.input_weight, enc.input_bias)?;
    let pos = tape.constant(Tensor::new(
        enc.positional.data()[..seq * d].to_vec(),
        &[seq, d],
    )?);
    let mut x = tape.add(projected, pos)?;

    let scale = 1.0 / (dh as f64).sqrt();

    let mut layer_firsts = Vec::with_capacity(config.layers);
    for layer in &enc.layers {
        // attention sublayer
        let h = tape.layer_norm(x, Some(layer.ln1_gamma), Some(layer.ln1_beta), LN_EPS)?;
        let q = tape.linear(h, layer.wq, layer.bq)?;
        let k = tape.linear(h, layer.wk, layer.bk)?;
        let v = tape.linear(h, layer.wv, layer.bv)?;
        let ctx = tape.attention(q, k, v, config.heads, scale, mask)?;
        let attn_out = tape.linear(ctx, layer.wo, layer.bo)?;
        let attn_out = maybe_dropout(tape, attn_out, config.dropout, &mut dropout_rng)?;
        x = tape.add(x, attn_out)?;

        // feed-forward sublayer
        let h2 = tape.layer_norm(x, Some(layer.ln2_gamma), Some(layer.ln2_beta), LN_EPS)?;
        let f1 = tape.linear(h2, layer.w1, layer.b1)?;
        let f1 = tape.gelu(f1)?;
        let f2 = tape.linear(f1, layer.w2, layer.b2)?;
        let f2 = maybe_dropout(tape, f2, config.dropout, &mut dropout_rng)?;
        x = tape.add(x, f2)?;

        layer_firsts.push(tape.row(x, 0)?);
    }

    let final_seq = tape.layer_norm(x, Some(enc.final_gamma), Some(enc.final_beta), LN_EPS)?;
    let v = tape.row(final_seq, 0)?;
    Ok(EncodeOutput {
        layer_firsts,
        final_seq,
        v,
    })
}
