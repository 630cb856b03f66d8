use std::time::Instant;
use cte::features::FeatureSequence;
use cte::model::{encode_features, init_model, TapedEncoder};
use cte::numerics::{special, Precision, Tape, Tensor};
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

    // whole encode
    let t = Instant::now();
    let reps = 50;
    for _ in 0..reps {
        let mut tape = Tape::new(Precision::F64);
        let enc = TapedEncoder::stage(&mut tape, &student, false);
        std::hint::black_box(encode_features(&mut tape, &enc, &config, &feats, None).unwrap());
    }
    println!("encode: {:.2} ms", t.elapsed().as_secs_f64() / reps as f64 * 1e3);

    // staging only
    let t = Instant::now();
    for _ in 0..reps {
        let mut tape = Tape::new(Precision::F64);
        std::hint::black_box(TapedEncoder::stage(&mut tape, &student, false));
    }
    println!("stage: {:.3} ms", t.elapsed().as_secs_f64() / reps as f64 * 1e3);

    // gelu on a 65x512 tensor
    let x = Tensor::new(lcg(9, 65 * 512), &[65, 512]).unwrap();
    let t = Instant::now();
    let reps2 = 2000;
    for _ in 0..reps2 {
        let mut tape = Tape::new(Precision::F64);
        let xi = tape.constant(x.clone());
        std::hint::black_box(tape.gelu(xi).unwrap());
    }
    let per = t.elapsed().as_secs_f64() / reps2 as f64;
    println!("gelu 65x512: {:.3} ms ({:.2} ns/elem)", per * 1e3, per / (65.0 * 512.0) * 1e9);

    // raw erf slice
    let xs = lcg(10, 65 * 512);
    let mut out = vec![0.0; xs.len()];
    let mut cdf = vec![0.0; xs.len()];
    let t = Instant::now();
    for _ in 0..reps2 {
        special::gelu_slice(&xs, &mut out, &mut cdf);
        std::hint::black_box(&out);
    }
    let per = t.elapsed().as_secs_f64() / reps2 as f64;
    println!("gelu_slice raw: {:.3} ms ({:.2} ns/elem)", per * 1e3, per / (65.0 * 512.0) * 1e9);

    // softmax rows 65x65 with mask
    let s = Tensor::new(lcg(11, 65 * 65), &[65, 65]).unwrap();
    let mask = std::sync::Arc::new(vec![true; 65 * 65]);
    let t = Instant::now();
    for _ in 0..reps2 {
        let mut tape = Tape::new(Precision::F64);
        let si = tape.constant(s.clone());
        std::hint::black_box(tape.softmax_rows(si, Some(mask.clone())).unwrap());
    }
    println!("softmax 65x65: {:.3} ms", t.elapsed().as_secs_f64() / reps2 as f64 * 1e3);

    // layer_norm 65x128
    let ln_in = Tensor::new(lcg(12, 65 * 128), &[65, 128]).unwrap();
    let g = Tensor::new(lcg(13, 128), &[128]).unwrap();
    let b = Tensor::new(lcg(14, 128), &[128]).unwrap();
    let t = Instant::now();
    for _ in 0..reps2 {
        let mut tape = Tape::new(Precision::F64);
        let xi = tape.constant(ln_in.clone());
        let gi = tape.constant(g.clone());
        let bi = tape.constant(b.clone());
        std::hint::black_box(tape.layer_norm(xi, Some(gi), Some(bi), 1e-5).unwrap());
    }
    println!("layer_norm 65x128: {:.3} ms", t.elapsed().as_secs_f64() / reps2 as f64 * 1e3);

    // matmuls of the shapes used per layer
    for (m, k, n, label) in [(65usize, 128usize, 128usize, "qkv"), (65, 128, 512, "ffn1"), (65, 512, 128, "ffn2"), (65, 32, 65, "scores"), (65, 65, 32, "apply")] {
        let a = Tensor::new(lcg(20, m * k), &[m, k]).unwrap();
        let b2 = Tensor::new(lcg(21, k * n), &[k, n]).unwrap();
        let t = Instant::now();
        for _ in 0..reps2 {
            let mut tape = Tape::new(Precision::F64);
            let ai = tape.constant(a.clone());
            let bi = tape.constant(b2.clone());
            std::hint::black_box(tape.matmul(ai, bi).unwrap());
        }
        println!("matmul {label} {m}x{k}x{n}: {:.1} us", t.elapsed().as_secs_f64() / reps2 as f64 * 1e6);
    }
}
