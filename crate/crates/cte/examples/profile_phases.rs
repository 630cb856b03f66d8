use std::time::Instant;
use cte::dataset::{assemble_batch, FeatureStore, Split, WordPair, WordSegment};
use cte::features::FeatureSequence;
use cte::model::{build_target, cosine_loss_on_tape, encode_batch, TapedEncoder};
use cte::numerics::{Precision, Tape};
use cte::trainer::TrainState;
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
    let mut store = FeatureStore::new();
    let mut pairs = Vec::new();
    for i in 0..64usize {
        let t = 50 + (i * 7) % 28;
        store.insert(format!("u{i}"), FeatureSequence::from_raw(lcg(10 + i as u64, t * 80), t, 80).unwrap());
    }
    for i in 0..32usize {
        let seg = |k: usize, t: usize| WordSegment {
            utterance_id: format!("u{k}"), start: 0.0, end: t as f64 * 0.01,
            word_id: Some("w".into()), split: Split::Train,
        };
        pairs.push(WordPair { a: seg(i, 50 + (i * 7) % 28), b: seg(i + 32, 50 + ((i + 32) * 7) % 28) });
    }
    let idx: Vec<usize> = (0..32).collect();
    let batch = assemble_batch(&pairs, &idx, &store, 1.0).unwrap();
    let state = TrainState::new(config.clone(), 7).unwrap();

    let trimmed = |side: &cte::Tensor, lens: &[usize], i: usize| -> Vec<f64> {
        let t = side.shape()[1]; let f = side.shape()[2];
        side.data()[i * t * f..i * t * f + lens[i] * f].to_vec()
    };
    let student_rows_owned: Vec<Vec<f64>> = (0..32).map(|i| trimmed(&batch.student, &batch.student_len, i)).collect();
    let student_rows: Vec<&[f64]> = student_rows_owned.iter().map(|r| r.as_slice()).collect();

    let reps = 8;
    // teacher-style forward (no grad)
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut tape = Tape::new(Precision::F64);
        let enc = TapedEncoder::stage(&mut tape, &state.teacher, false);
        std::hint::black_box(encode_batch(&mut tape, &enc, &config, &student_rows, None).unwrap());
    }
    println!("no-grad packed fwd: {:.1} ms", t0.elapsed().as_secs_f64() / reps as f64 * 1e3);

    // student forward only (grad leaves, no backward)
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut tape = Tape::new(Precision::F64);
        let enc = TapedEncoder::stage(&mut tape, &state.student, true);
        std::hint::black_box(encode_batch(&mut tape, &enc, &config, &student_rows, None).unwrap());
    }
    println!("grad packed fwd: {:.1} ms", t0.elapsed().as_secs_f64() / reps as f64 * 1e3);

    // forward + loss + backward
    let targets: Vec<Vec<f64>> = {
        let mut tape = Tape::new(Precision::F64);
        let enc = TapedEncoder::stage(&mut tape, &state.teacher, false);
        let touts = encode_batch(&mut tape, &enc, &config, &student_rows, None).unwrap();
        touts.iter().map(|o| {
            let lv: Vec<Vec<f64>> = o.layer_firsts.iter().map(|&id| tape.data(id).to_vec()).collect();
            build_target(&lv, config.top_k).unwrap()
        }).collect()
    };
    let mut t_fwd = 0.0; let mut t_bwd = 0.0; let mut t_read = 0.0;
    for _ in 0..reps {
        let t0 = Instant::now();
        let mut tape = Tape::new(Precision::F64);
        let enc = TapedEncoder::stage(&mut tape, &state.student, true);
        let outs = encode_batch(&mut tape, &enc, &config, &student_rows, None).unwrap();
        let mut losses = Vec::new();
        for (o, tg) in outs.iter().zip(targets.iter()) {
            losses.push(cosine_loss_on_tape(&mut tape, o.v, tg).unwrap());
        }
        let mut total = losses[0];
        for &l in &losses[1..] { total = tape.add(total, l).unwrap(); }
        let mean = tape.scale(total, 1.0 / 32.0).unwrap();
        t_fwd += t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        tape.backward(mean).unwrap();
        t_bwd += t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let ids = enc.grad_ids();
        let mut norm = 0.0;
        for &id in &ids { for v in tape.grad(id).unwrap() { norm += v * v; } }
        std::hint::black_box(norm);
        t_read += t0.elapsed().as_secs_f64();
    }
    println!("fwd+loss: {:.1} ms, backward: {:.1} ms, grad-read: {:.1} ms",
        t_fwd / reps as f64 * 1e3, t_bwd / reps as f64 * 1e3, t_read / reps as f64 * 1e3);
}
