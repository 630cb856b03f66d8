use std::time::Instant;
use cte::dataset::{build_pairs, FeatureStore, Split};
use cte::eval::{
    collapse_metric, downsampling_baseline, extract_embeddings, psed_curve, same_different,
    DOWNSAMPLE_FRAMES,
};
use cte::features::{compute_log_mel, read_wav, FrontendConfig};
use cte::synth::{generate, CorpusSpec};
use cte::trainer::{train_loop, OptimConfig, TrainState};
use cte::{EvalSegment, ModelConfig, Precision};

fn main() {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let lr: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let warmup: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(500);
    let snr_lo: f64 = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(12.0);
    let snr_hi: f64 = std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(28.0);
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let spec = CorpusSpec { seed: 11, snr_db: (snr_lo, snr_hi), ..CorpusSpec::default() };
    let corpus = generate(&spec, dir.path()).unwrap();
    eprintln!("corpus: {} segments in {:.1}s", corpus.segments.len(), t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let cfg = FrontendConfig::default();
    let mut store = FeatureStore::new();
    for seg in &corpus.segments {
        let wav = corpus.wav_dir.join(format!("{}.wav", seg.utterance_id));
        let w = read_wav(&wav).unwrap();
        store.insert(seg.utterance_id.clone(), compute_log_mel(&w, &cfg).unwrap());
    }
    eprintln!("features in {:.1}s", t1.elapsed().as_secs_f64());

    let train_segs: Vec<_> = corpus.segments.iter().filter(|s| s.split == Split::Train).cloned().collect();
    let pairs = build_pairs(&train_segs, 11).unwrap();
    eprintln!("train pairs: {}", pairs.len());

    let optim = OptimConfig { total_steps: steps, seed: 11, log_interval: 50, learning_rate: lr, warmup_steps: warmup, ..OptimConfig::default() };
    eprintln!("lr {} warmup {} snr ({}, {})", lr, warmup, snr_lo, snr_hi);
    let state = TrainState::new(ModelConfig::desk(), 11).unwrap();
    let t2 = Instant::now();
    let (state, curve) = train_loop(state, &pairs, &store, &optim, None).unwrap();
    eprintln!("trained {} steps in {:.1}s ({:.0} ms/step)", steps, t2.elapsed().as_secs_f64(), t2.elapsed().as_secs_f64() / steps as f64 * 1e3);
    eprintln!("loss curve: first {:?} last {:?}", curve.first(), curve.last());

    // test split eval
    let test_idx: Vec<usize> = (0..corpus.segments.len()).filter(|&i| corpus.segments[i].split == Split::Test).collect();
    let feats: Vec<_> = test_idx.iter().map(|&i| store.segment_features(&corpus.segments[i]).unwrap()).collect();
    let labels: Vec<String> = test_idx.iter().map(|&i| corpus.segments[i].word_id.clone().unwrap()).collect();
    eprintln!("test segments: {} (mean T {:.1})", feats.len(), feats.iter().map(|f| f.num_frames() as f64).sum::<f64>() / feats.len() as f64);
    let emb = extract_embeddings(&state.student, &state.model_config, &feats, Precision::F64).unwrap();
    let r = same_different(&emb, &labels).unwrap();
    let ds: Vec<_> = feats.iter().map(|f| downsampling_baseline(f, DOWNSAMPLE_FRAMES)).collect();
    let rd = same_different(&ds, &labels).unwrap();
    let col = collapse_metric(&emb).unwrap();
    eprintln!("CTE ap_roc {:.4} ap_pr {:.4} | downsampling ap_roc {:.4} | collapse {:.4}", r.ap_roc, r.ap_pr, rd.ap_roc, col);

    let segs: Vec<EvalSegment> = test_idx.iter().zip(feats.iter()).map(|(&i, f)| EvalSegment {
        segment: corpus.segments[i].clone(),
        features: f.clone(),
        phones: Some(corpus.phones[i].clone()),
        speaker_id: corpus.speakers[i].clone(),
    }).collect();
    let buckets = psed_curve(&segs, &emb).unwrap();
    for b in &buckets {
        eprintln!("psed {}: count {} mean {:?}", b.bucket, b.count, b.mean_cos);
    }
    eprintln!("total {:.1}s", t0.elapsed().as_secs_f64());
}
