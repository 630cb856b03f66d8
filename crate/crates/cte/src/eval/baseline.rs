//! Heuristic baselines for the same-different task: fixed-rate frame
//! downsampling and DTW alignment cost on raw features.

use crate::features::FeatureSequence;
use crate::model::Embedding;
use crate::numerics::cosine_similarity;

/// Select `n` evenly spaced frames (nearest index) and concatenate them
/// into one n·F vector.
pub fn downsampling_baseline(features: &FeatureSequence, n: usize) -> Embedding {
    let t = features.num_frames();
    let f = features.dim();
    let mut out = Vec::with_capacity(n * f);
    for i in 0..n {
        let idx = if n == 1 {
            0
        } else {
            ((i as f64) * (t as f64 - 1.0) / (n as f64 - 1.0)).round() as usize
        };
        out.extend_from_slice(features.frame(idx.min(t - 1)));
    }
    Embedding(out)
}

pub const DOWNSAMPLE_FRAMES: usize = 10;

/// Dynamic time warping alignment cost with per-frame cosine distance and
/// (T1 + T2) path-length normalization. Symmetric; 0 for identical inputs.
/// Same-different scoring uses the negated distance as similarity.
pub fn dtw_distance(f1: &FeatureSequence, f2: &FeatureSequence) -> f64 {
    let (t1, t2) = (f1.num_frames(), f2.num_frames());
    let big = f64::INFINITY;
    // one rolling row of the DP table
    let mut prev = vec![big; t2 + 1];
    let mut cur = vec![big; t2 + 1];
    prev[0] = 0.0;
    for i in 1..=t1 {
        cur[0] = big;
        let a = f1.frame(i - 1);
        for j in 1..=t2 {
            let c = 1.0 - cosine_similarity(a, f2.frame(j - 1));
            let best = prev[j].min(cur[j - 1]).min(prev[j - 1]);
            cur[j] = c + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[t2] / (t1 + t2) as f64
}
