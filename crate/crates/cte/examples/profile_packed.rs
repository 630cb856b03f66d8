use std::time::Instant;
use cte::model::{init_model, TapedEncoder};
use cte::numerics::{special, Precision, Tape};
use cte::{ModelConfig, Tensor};

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
    let total = 2064usize;
    let segments: Vec<(usize, usize)> = (0..32).map(|i| (i * 64 + (i.min(16)), 64)).collect();
    // build proper contiguous segments of 64/65 rows summing to ~2064
    let mut segs = Vec::new();
    let mut off = 0;
    for i in 0..32 {
        let len = if i % 2 == 0 { 64 } else { 65 };
        segs.push((off, len));
        off += len;
    }
    let total = off;
    let d = 128usize;
    let reps = 20;

    let x0 = Tensor::new(lcg(5, total * d), &[total, d]).unwrap();

    // LN
    let mut t_ln = 0.0;
    for _ in 0..reps {
        let mut tape = Tape::new(Precision::F64);
        let enc = TapedEncoder::stage(&mut tape, &student, false);
        let x = tape.constant(x0.clone());
        let t0 = Instant::now();
        std::hint::black_box(tape.layer_norm(x, Some(enc.layers[0].ln1_gamma), Some(enc.layers[0].ln1_beta), 1e-5).unwrap());
        t_ln += t0.elapsed().as_secs_f64();
    }
    println!("LN {total}x{d}: {:.2} ms", t_ln / reps as f64 * 1e3);

    // linear qkv
    let mut t_lin = 0.0;
    for _ in 0..reps {
        let mut tape = Tape::new(Precision::F64);
        let enc = TapedEncoder::stage(&mut tape, &student, false);
        let x = tape.constant(x0.clone());
        let t0 = Instant::now();
        std::hint::black_box(tape.linear(x, enc.layers[0].wq, enc.layers[0].bq).unwrap());
        t_lin += t0.elapsed().as_secs_f64();
    }
    println!("linear {total}x128x128: {:.2} ms", t_lin / reps as f64 * 1e3);

    // linear ffn1 + gelu + ffn2
    let mut t_f1 = 0.0; let mut t_gelu = 0.0; let mut t_f2 = 0.0;
    for _ in 0..reps {
        let mut tape = Tape::new(Precision::F64);
        let enc = TapedEncoder::stage(&mut tape, &student, false);
        let x = tape.constant(x0.clone());
        let t0 = Instant::now();
        let f1 = tape.linear(x, enc.layers[0].w1, enc.layers[0].b1).unwrap();
        t_f1 += t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let a = tape.gelu(f1).unwrap();
        t_gelu += t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        std::hint::black_box(tape.linear(a, enc.layers[0].w2, enc.layers[0].b2).unwrap());
        t_f2 += t0.elapsed().as_secs_f64();
    }
    println!("ffn1: {:.2} ms, gelu: {:.2} ms ({:.2} ns/elem), ffn2: {:.2} ms",
        t_f1 / reps as f64 * 1e3,
        t_gelu / reps as f64 * 1e3,
        t_gelu / reps as f64 / (total as f64 * 512.0) * 1e9,
        t_f2 / reps as f64 * 1e3);

    // attention packed
    let mut t_attn = 0.0;
    for _ in 0..reps {
        let mut tape = Tape::new(Precision::F64);
        let q = tape.constant(x0.clone());
        let k = tape.constant(x0.clone());
        let v = tape.constant(x0.clone());
        let t0 = Instant::now();
        std::hint::black_box(tape.attention_packed(q, k, v, 4, 0.176, &segs).unwrap());
        t_attn += t0.elapsed().as_secs_f64();
    }
    println!("attention packed: {:.2} ms", t_attn / reps as f64 * 1e3);

    // residual add
    let mut t_add = 0.0;
    for _ in 0..reps {
        let mut tape = Tape::new(Precision::F64);
        let x = tape.constant(x0.clone());
        let y = tape.constant(x0.clone());
        let t0 = Instant::now();
        std::hint::black_box(tape.add(x, y).unwrap());
        t_add += t0.elapsed().as_secs_f64();
    }
    println!("residual add: {:.2} ms", t_add / reps as f64 * 1e3);

    // raw exp on 65-wide rows
    let xs = lcg(6, 16900);
    let mut out = vec![0.0; 16900];
    let t0 = Instant::now();
    for _ in 0..2000 { special::exp_slice(&xs, &mut out); }
    println!("exp_slice: {:.2} ns/elem", t0.elapsed().as_secs_f64() / 2000.0 / 16900.0 * 1e9);
    let _ = total;
}
