use std::sync::Arc;
use std::time::Instant;
use cte::features::FeatureSequence;
use cte::model::{init_model, TapedEncoder};
use cte::numerics::{Precision, Tape};
use cte::ModelConfig;

fn lcg(seed: u64, n: usize) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
    (0..n).map(|_| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }).collect()
}

fn main() {
    let config = ModelConfig::desk();
    let (student, _) = init_model(&config, 1).unwrap();
    let feats = FeatureSequence::from_raw(lcg(3, 64 * 80), 64, 80).unwrap();
    let reps = 100;
    let mut t_ln = 0.0; let mut t_qkv = 0.0; let mut t_attn = 0.0; let mut t_ffn = 0.0;
    let mut t_gelu = 0.0; let mut t_misc = 0.0;
    let total = Instant::now();
    for _ in 0..reps {
        let mut tape = Tape::new(Precision::F64);
        let enc = TapedEncoder::stage(&mut tape, &student, false);
        let f = config.feature_dim;
        let t_frames = feats.num_frames();
        let mut data = Vec::with_capacity((t_frames + 1) * f);
        data.extend(std::iter::repeat_n(1.0f64, f));
        data.extend_from_slice(feats.data());
        let tokens = cte::Tensor::new(data, &[t_frames + 1, f]).unwrap();
        let seq = t_frames + 1;
        let d = config.model_dim;
        let dh = config.head_dim();
        let mask = vec![true; seq];

        let t0 = Instant::now();
        let input = tape.constant(tokens);
        let projected = tape.matmul(input, enc.input_weight).unwrap();
        let projected = tape.add_row(projected, enc.input_bias).unwrap();
        let pos = tape.constant(cte::Tensor::new(lcg(5, seq * d), &[seq, d]).unwrap());
        let mut x = tape.add(projected, pos).unwrap();
        t_misc += t0.elapsed().as_secs_f64();

        let attn_mask: Arc<Vec<bool>> = Arc::new((0..seq).flat_map(|_| mask.iter().copied()).collect::<Vec<bool>>());
        let scale = 1.0 / (dh as f64).sqrt();
        for layer in &enc.layers {
            let t0 = Instant::now();
            let h = tape.layer_norm(x, Some(layer.ln1_gamma), Some(layer.ln1_beta), 1e-5).unwrap();
            t_ln += t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            let q = tape.matmul(h, layer.wq).unwrap();
            let q = tape.add_row(q, layer.bq).unwrap();
            let k = tape.matmul(h, layer.wk).unwrap();
            let k = tape.add_row(k, layer.bk).unwrap();
            let v = tape.matmul(h, layer.wv).unwrap();
            let v = tape.add_row(v, layer.bv).unwrap();
            t_qkv += t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            let mut heads = Vec::new();
            for hix in 0..config.heads {
                let qh = tape.cols(q, hix * dh, dh).unwrap();
                let kh = tape.cols(k, hix * dh, dh).unwrap();
                let vh = tape.cols(v, hix * dh, dh).unwrap();
                let scores = tape.matmul_nt(qh, kh).unwrap();
                let scores = tape.scale(scores, scale).unwrap();
                let attn = tape.softmax_rows(scores, Some(Arc::clone(&attn_mask))).unwrap();
                heads.push(tape.matmul(attn, vh).unwrap());
            }
            let ctx = tape.concat_cols(&heads).unwrap();
            let attn_out = tape.matmul(ctx, layer.wo).unwrap();
            let attn_out = tape.add_row(attn_out, layer.bo).unwrap();
            x = tape.add(x, attn_out).unwrap();
            t_attn += t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            let h2 = tape.layer_norm(x, Some(layer.ln2_gamma), Some(layer.ln2_beta), 1e-5).unwrap();
            let f1 = tape.matmul(h2, layer.w1).unwrap();
            let f1 = tape.add_row(f1, layer.b1).unwrap();
            t_ffn += t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            let f1 = tape.gelu(f1).unwrap();
            t_gelu += t0.elapsed().as_secs_f64();
            let t0 = Instant::now();
            let f2 = tape.matmul(f1, layer.w2).unwrap();
            let f2 = tape.add_row(f2, layer.b2).unwrap();
            x = tape.add(x, f2).unwrap();
            t_ffn += t0.elapsed().as_secs_f64();
        }
        let t0 = Instant::now();
        let fin = tape.layer_norm(x, Some(enc.final_gamma), Some(enc.final_beta), 1e-5).unwrap();
        std::hint::black_box(tape.row(fin, 0).unwrap());
        t_misc += t0.elapsed().as_secs_f64();
    }
    let r = reps as f64;
    println!("total: {:.2} ms", total.elapsed().as_secs_f64() / r * 1e3);
    println!("ln: {:.2} ms, qkv: {:.2} ms, attn: {:.2} ms, ffn(mm): {:.2} ms, gelu: {:.2} ms, misc: {:.2} ms",
        t_ln / r * 1e3, t_qkv / r * 1e3, t_attn / r * 1e3, t_ffn / r * 1e3, t_gelu / r * 1e3, t_misc / r * 1e3);
}
