use std::time::Instant;
use cte::dataset::{assemble_batch, FeatureStore, Split, WordPair, WordSegment};
use cte::features::FeatureSequence;
use cte::trainer::{train_step, OptimConfig, TrainState};
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
    // realistic duration spread: 50..77 frames
    for i in 0..64usize {
        let t = 50 + (i * 7) % 28;
        store.insert(
            format!("u{i}"),
            FeatureSequence::from_raw(lcg(10 + i as u64, t * 80), t, 80).unwrap(),
        );
    }
    for i in 0..32usize {
        let seg = |k: usize, t: usize| WordSegment {
            utterance_id: format!("u{k}"),
            start: 0.0,
            end: t as f64 * 0.01,
            word_id: Some("w".into()),
            split: Split::Train,
        };
        pairs.push(WordPair {
            a: seg(i, 50 + (i * 7) % 28),
            b: seg(i + 32, 50 + ((i + 32) * 7) % 28),
        });
    }
    let optim = OptimConfig { batch_size: 32, warmup_steps: 1, ..OptimConfig::default() };
    let idx: Vec<usize> = (0..32).collect();
    let batch = assemble_batch(&pairs, &idx, &store, 1.0).unwrap();
    let mut state = TrainState::new(config, 7).unwrap();
    // warmup
    train_step(&mut state, &batch, &optim).unwrap();
    let t = Instant::now();
    let reps = 10;
    for _ in 0..reps {
        std::hint::black_box(train_step(&mut state, &batch, &optim).unwrap());
    }
    let per = t.elapsed().as_secs_f64() / reps as f64;
    println!("train_step batch32: {:.1} ms -> 3000 steps = {:.1} min", per * 1e3, per * 3000.0 / 60.0);
}
