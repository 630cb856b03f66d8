use super::*;
use crate::dataset::Split;
use crate::model::{init_model, ModelConfig, TokenMode};

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

// ── same-different: brute-force threshold-enumeration oracle ─────────

/// ROC area by sweeping a threshold over every distinct score and
/// integrating the ROC polyline with integer numerators. Independent of
/// the rank-counting implementation.
pub(crate) fn roc_auc_oracle(scored: &[(f64, bool)]) -> f64 {
    let p: u64 = scored.iter().filter(|(_, s)| *s).count() as u64;
    let n: u64 = scored.len() as u64 - p;
    let mut thresholds: Vec<f64> = scored.iter().map(|(x, _)| *x).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut area2: u64 = 0;
    let (mut tp_prev, mut fp_prev) = (0u64, 0u64);
    for thr in thresholds {
        let tp = scored.iter().filter(|(x, s)| *s && *x >= thr).count() as u64;
        let fp = scored.iter().filter(|(x, s)| !*s && *x >= thr).count() as u64;
        area2 += (fp - fp_prev) * (tp + tp_prev);
        tp_prev = tp;
        fp_prev = fp;
    }
    area2 as f64 / (2 * p * n) as f64
}

/// PR average precision by recomputing the precision at every positive
/// from scratch.
pub(crate) fn pr_ap_oracle(scored: &[(f64, bool)]) -> f64 {
    let p = scored.iter().filter(|(_, s)| *s).count();
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&i, &j| {
        scored[j]
            .0
            .partial_cmp(&scored[i].0)
            .unwrap()
            .then(i.cmp(&j))
    });
    let mut sum = 0.0;
    for k in 1..=order.len() {
        if scored[order[k - 1]].1 {
            let tp = order[..k].iter().filter(|&&i| scored[i].1).count();
            sum += tp as f64 / k as f64;
        }
    }
    sum / p as f64
}

fn random_scored(seed: u64, n: usize, tie_prone: bool) -> Vec<(f64, bool)> {
    let vals = lcg(seed, 2 * n);
    (0..n)
        .map(|i| {
            let score = if tie_prone {
                (vals[i] * 4.0).round() / 4.0
            } else {
                vals[i]
            };
            (score, vals[n + i] > 0.15)
        })
        .collect()
}

fn has_both_classes(s: &[(f64, bool)]) -> bool {
    s.iter().any(|(_, c)| *c) && s.iter().any(|(_, c)| !*c)
}

#[test]
fn roc_and_pr_match_threshold_enumeration_oracle_exactly() {
    let mut checked = 0;
    for seed in 0..60u64 {
        let scored = random_scored(seed, 4 + (seed as usize % 60), seed % 2 == 0);
        if !has_both_classes(&scored) {
            continue;
        }
        let roc = roc_auc(&scored).unwrap();
        let pr = pr_ap(&scored).unwrap();
        assert_eq!(roc.to_bits(), roc_auc_oracle(&scored).to_bits(), "seed {seed}");
        assert_eq!(pr.to_bits(), pr_ap_oracle(&scored).to_bits(), "seed {seed}");
        checked += 1;
    }
    assert!(checked >= 40);
}

#[test]
fn perfect_separation_gives_ap_one() {
    // two tight clusters along orthogonal axes
    let mut embeddings = Vec::new();
    let mut labels = Vec::new();
    for i in 0..3 {
        embeddings.push(Embedding(vec![1.0, 0.01 * i as f64, 0.0]));
        labels.push("A".to_string());
        embeddings.push(Embedding(vec![0.0, 0.01 * i as f64, 1.0]));
        labels.push("B".to_string());
    }
    let r = same_different(&embeddings, &labels).unwrap();
    assert_eq!(r.ap_roc, 1.0);
    assert_eq!(r.ap_pr, 1.0);
    assert_eq!(r.pairs.len(), 15);
    assert_eq!(r.n_same, 6);
    assert_eq!(r.n_diff, 9);
}

#[test]
fn all_equal_scores_give_half_roc() {
    let scored = vec![(0.5, true), (0.5, false), (0.5, true), (0.5, false)];
    assert_eq!(roc_auc(&scored).unwrap(), 0.5);
}

#[test]
fn hand_chosen_six_segment_case() {
    // 6 segments, 2 types; constructed so exactly one different-pair
    // outscores exactly one same-pair.
    let scored = vec![
        (0.95, true),
        (0.90, true),
        (0.70, false), // the intruder
        (0.60, true),
        (0.50, false),
        (0.40, false),
        (0.30, true),
        (0.20, false),
    ];
    let roc = roc_auc(&scored).unwrap();
    // concordant = 4·... count by hand: positives 0.95,0.90,0.60,0.30 vs
    // negatives 0.70,0.50,0.40,0.20 → (4+4+3+1)/16 = 12/16
    assert_eq!(roc, 12.0 / 16.0);
    assert_eq!(roc.to_bits(), roc_auc_oracle(&scored).to_bits());
    let pr = pr_ap(&scored).unwrap();
    // precisions at positives: 1/1, 2/2, 3/4, 4/7
    let expected = (1.0 + 1.0 + 0.75 + 4.0 / 7.0) / 4.0;
    assert!((pr - expected).abs() < 1e-15);
    assert_eq!(pr.to_bits(), pr_ap_oracle(&scored).to_bits());
}

#[test]
fn roc_invariant_under_monotone_transform_and_permutation() {
    let scored = random_scored(5, 40, true);
    let base = roc_auc(&scored).unwrap();
    let transformed: Vec<(f64, bool)> = scored
        .iter()
        .map(|(x, s)| (x * x * x + 2.0 * x + 1.0, *s))
        .collect();
    assert_eq!(base.to_bits(), roc_auc(&transformed).unwrap().to_bits());
    let mut permuted = scored.clone();
    permuted.reverse();
    permuted.swap(0, 7);
    assert_eq!(base.to_bits(), roc_auc(&permuted).unwrap().to_bits());
}

#[test]
fn degenerate_label_sets_are_input_errors() {
    let embeddings = vec![
        Embedding(vec![1.0, 0.0]),
        Embedding(vec![0.9, 0.1]),
        Embedding(vec![0.8, 0.2]),
    ];
    let labels: Vec<String> = vec!["A".into(), "A".into(), "A".into()];
    assert!(matches!(
        same_different(&embeddings, &labels),
        Err(crate::Error::Input(_))
    ));
    assert!(matches!(
        same_different(&embeddings[..1], &labels[..1]),
        Err(crate::Error::Input(_))
    ));
}

#[test]
fn pair_count_is_n_choose_two() {
    for n in [4usize, 5, 9, 12] {
        let embeddings: Vec<Embedding> =
            (0..n).map(|i| Embedding(lcg(i as u64, 6))).collect();
        let labels: Vec<String> = (0..n).map(|i| format!("w{}", i % 2)).collect();
        let r = same_different(&embeddings, &labels).unwrap();
        assert_eq!(r.pairs.len(), n * (n - 1) / 2);
        assert_eq!(r.n_same + r.n_diff, n * (n - 1) / 2);
    }
}

// ── PSED ─────────────────────────────────────────────────────────────

/// Exhaustive-recursion edit distance, exponential but obviously correct.
fn lev_recursive(a: &[u8], b: &[u8]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let sub = lev_recursive(&a[1..], &b[1..]) + usize::from(a[0] != b[0]);
    let del = lev_recursive(&a[1..], b) + 1;
    let ins = lev_recursive(a, &b[1..]) + 1;
    sub.min(del).min(ins)
}

#[test]
fn psed_identical_is_zero() {
    let p = ["k", "ae", "t"];
    assert_eq!(psed(&p, &p), 0);
}

#[test]
fn psed_single_substitution() {
    let a = ["k", "ae", "t"];
    let b = ["k", "ah", "t"];
    assert_eq!(psed(&a, &b), 1);
}

#[test]
fn psed_matches_recursive_oracle() {
    for seed in 0..200u64 {
        let vals = lcg(seed, 14);
        let la = (vals[0].abs() * 7.0) as usize % 7;
        let lb = (vals[1].abs() * 7.0) as usize % 7;
        let a: Vec<u8> = (0..la).map(|i| ((vals[2 + i].abs() * 3.0) as u8) % 3).collect();
        let b: Vec<u8> = (0..lb).map(|i| ((vals[8 + i].abs() * 3.0) as u8) % 3).collect();
        assert_eq!(psed(&a, &b), lev_recursive(&a, &b), "{a:?} vs {b:?}");
    }
}

fn eval_seg(utt: &str, phones: &[&str]) -> EvalSegment {
    EvalSegment {
        segment: crate::dataset::WordSegment {
            utterance_id: utt.into(),
            start: 0.0,
            end: 1.0,
            word_id: Some("w".into()),
            split: Split::Test,
        },
        features: crate::features::FeatureSequence::from_raw(vec![0.1; 8], 1, 8).unwrap(),
        phones: Some(phones.iter().map(|s| s.to_string()).collect()),
        speaker_id: "spk0".into(),
    }
}

#[test]
fn psed_curve_single_type_populates_bucket_zero_only() {
    let segs = vec![
        eval_seg("u0", &["a", "b"]),
        eval_seg("u1", &["a", "b"]),
        eval_seg("u2", &["a", "b"]),
    ];
    let emb: Vec<Embedding> = (0..3).map(|i| Embedding(lcg(i, 4))).collect();
    let curve = psed_curve(&segs, &emb).unwrap();
    assert_eq!(curve[0].count, 3);
    assert!(curve[1..].iter().all(|b| b.count == 0 && b.mean_cos.is_none()));
}

#[test]
fn psed_curve_constant_embeddings_collapse_to_global_mean() {
    let segs = vec![
        eval_seg("u0", &["a", "b", "c"]),
        eval_seg("u1", &["a", "b", "c"]),
        eval_seg("u2", &["a", "x", "c"]),
        eval_seg("u3", &["x", "y", "z"]),
    ];
    let emb: Vec<Embedding> = (0..4).map(|_| Embedding(vec![0.3, -0.4, 0.5])).collect();
    let curve = psed_curve(&segs, &emb).unwrap();
    let populated: Vec<&PsedBucket> = curve.iter().filter(|b| b.count > 0).collect();
    assert!(populated.len() > 1);
    for b in populated {
        let m = b.mean_cos.unwrap();
        assert!((m - 1.0).abs() < 1e-12, "bucket {} mean {m}", b.bucket);
    }
}

#[test]
fn psed_curve_aggregates_four_plus() {
    let segs = vec![
        eval_seg("u0", &["a", "b", "c", "d", "e", "f"]),
        eval_seg("u1", &["q", "r", "s", "t", "u", "v"]), // distance 6 → 4+
    ];
    let emb: Vec<Embedding> = (0..2).map(|i| Embedding(lcg(i, 4))).collect();
    let curve = psed_curve(&segs, &emb).unwrap();
    assert_eq!(curve[4].count, 1);
}

// ── PCA: dense Jacobi eigensolver oracle ─────────────────────────────

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (test oracle).
fn jacobi_eigen(mut a: Vec<f64>, d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    for _sweep in 0..200 {
        let mut off = 0.0;
        for p in 0..d {
            for q in p + 1..d {
                off += a[p * d + q].abs();
            }
        }
        if off < 1e-13 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
        .map(|i| (a[i * d + i], (0..d).map(|k| v[k * d + i]).collect()))
        .collect();
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    (
        pairs.iter().map(|(l, _)| *l).collect(),
        pairs.into_iter().map(|(_, u)| u).collect(),
    )
}

#[test]
fn pca_line_puts_all_variance_on_first_component() {
    let dir = lcg(3, 8);
    let embeddings: Vec<Embedding> = (0..10)
        .map(|i| Embedding(dir.iter().map(|x| x * i as f64 + 2.0).collect()))
        .collect();
    let p = pca_project(&embeddings, 2).unwrap();
    assert!(p.reduced_rank, "line has rank 1");
    assert_eq!(p.components.len(), 1);
    assert!((p.explained[0] - 1.0).abs() < 1e-9, "{}", p.explained[0]);
}

#[test]
fn pca_identical_points_take_reduced_rank_path() {
    let embeddings: Vec<Embedding> = (0..5).map(|_| Embedding(vec![1.0, 2.0, 3.0])).collect();
    let p = pca_project(&embeddings, 2).unwrap();
    assert!(p.reduced_rank);
    assert!(p.components.is_empty());
    assert!(p.coords.iter().all(|c| c.is_empty()));
}

#[test]
fn pca_needs_k_plus_one_points() {
    let embeddings: Vec<Embedding> = (0..2).map(|i| Embedding(lcg(i, 4))).collect();
    assert!(matches!(
        pca_project(&embeddings, 2),
        Err(crate::Error::Input(_))
    ));
}

#[test]
fn pca_matches_dense_eigensolver_oracle() {
    let n = 50;
    let d = 16;
    let embeddings: Vec<Embedding> = (0..n)
        .map(|i| Embedding(lcg(1000 + i as u64, d)))
        .collect();
    let k = 3;
    let p = pca_project(&embeddings, k).unwrap();
    assert!(!p.reduced_rank);

    // oracle: covariance + Jacobi
    let mut mean = vec![0.0; d];
    for e in &embeddings {
        for (m, x) in mean.iter_mut().zip(e.as_slice()) {
            *m += x / n as f64;
        }
    }
    let mut cov = vec![0.0; d * d];
    for e in &embeddings {
        let c: Vec<f64> = e.as_slice().iter().zip(mean.iter()).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += c[i] * c[j] / (n - 1) as f64;
            }
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let (eigvals, eigvecs) = jacobi_eigen(cov, d);

    for c in 0..k {
        let dot: f64 = p.components[c]
            .iter()
            .zip(eigvecs[c].iter())
            .map(|(a, b)| a * b)
            .sum();
        assert!(
            (dot.abs() - 1.0).abs() < 1e-8,
            "component {c} misaligned: |dot| = {}",
            dot.abs()
        );
        assert!(
            (p.explained[c] - eigvals[c] / trace).abs() < 1e-8,
            "component {c} variance fraction"
        );
    }
    // orthonormality and ordering
    for i in 0..k {
        for j in 0..k {
            let dot: f64 = p.components[i]
                .iter()
                .zip(p.components[j].iter())
                .map(|(a, b)| a * b)
                .sum();
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((dot - expect).abs() < 1e-8);
        }
    }
    assert!(p.explained.windows(2).all(|w| w[0] >= w[1] - 1e-12));
}

// ── baselines ────────────────────────────────────────────────────────

fn counted_features(t: usize, f: usize) -> crate::features::FeatureSequence {
    let mut data = Vec::with_capacity(t * f);
    for i in 0..t {
        data.extend(std::iter::repeat_n(i as f64, f));
    }
    crate::features::FeatureSequence::from_raw(data, t, f).unwrap()
}

#[test]
fn downsampling_identity_when_t_equals_n() {
    let feats = counted_features(10, 4);
    let e = downsampling_baseline(&feats, 10);
    assert_eq!(e.dim(), 40);
    for i in 0..10 {
        assert_eq!(e.as_slice()[i * 4], i as f64);
    }
}

#[test]
fn downsampling_single_frame_repeats() {
    let feats = counted_features(1, 4);
    let e = downsampling_baseline(&feats, 10);
    assert!(e.as_slice().iter().all(|&v| v == 0.0));
    assert_eq!(e.dim(), 40);
}

#[test]
fn downsampling_index_formula_98_frames() {
    let feats = counted_features(98, 1);
    let e = downsampling_baseline(&feats, 10);
    let expected = [0.0, 11.0, 22.0, 32.0, 43.0, 54.0, 65.0, 75.0, 86.0, 97.0];
    assert_eq!(e.as_slice(), &expected);
}

fn frames_of(letters: &[[f64; 2]]) -> crate::features::FeatureSequence {
    let data: Vec<f64> = letters.iter().flatten().copied().collect();
    crate::features::FeatureSequence::from_raw(data, letters.len(), 2).unwrap()
}

#[test]
fn dtw_identical_sequences_cost_zero() {
    let f = frames_of(&[[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]]);
    assert!(dtw_distance(&f, &f).abs() < 1e-12);
}

#[test]
fn dtw_is_symmetric() {
    let f1 = frames_of(&[[1.0, 0.0], [0.3, 0.7], [0.0, 1.0]]);
    let f2 = frames_of(&[[0.9, 0.1], [0.2, 0.8], [0.5, 0.5], [0.1, 0.9]]);
    assert_eq!(dtw_distance(&f1, &f2).to_bits(), dtw_distance(&f2, &f1).to_bits());
}

#[test]
fn dtw_matches_hand_unrolled_table() {
    // unit frames a = [1,0], b = [0,1], c = [-1,0] ⇒ cosine distances
    // d(a,b) = 1, d(a,c) = 2, d(x,x) = 0. Hand DP over f1 = (a,b,a),
    // f2 = (a,b,b,c):
    //   row a: 0 1 2 4
    //   row b: 1 0 0 1
    //   row a: 1 1 1 2   → total 2, normalized 2 / (3 + 4)
    let a = [1.0, 0.0];
    let b = [0.0, 1.0];
    let c = [-1.0, 0.0];
    let f1 = frames_of(&[a, b, a]);
    let f2 = frames_of(&[a, b, b, c]);
    assert!((dtw_distance(&f1, &f2) - 2.0 / 7.0).abs() < 1e-12);
}

// ── collapse ─────────────────────────────────────────────────────────

#[test]
fn collapse_metric_zero_for_identical_embeddings() {
    let emb: Vec<Embedding> = (0..8).map(|_| Embedding(vec![0.3, 0.4, 0.5])).collect();
    assert!(collapse_metric(&emb).unwrap() < 1e-12);
}

#[test]
fn collapse_metric_of_random_unit_vectors_near_inverse_sqrt_d() {
    // coordinates of random unit vectors in 256-d have variance ≈ 1/256
    let d = 256;
    let emb: Vec<Embedding> = (0..400)
        .map(|i| {
            let raw = lcg(7000 + i as u64, d);
            let norm = crate::numerics::l2_norm(&raw);
            Embedding(raw.iter().map(|x| x / norm).collect())
        })
        .collect();
    let m = collapse_metric(&emb).unwrap();
    let expected = 1.0 / (d as f64).sqrt();
    assert!(
        (m - expected).abs() < 0.25 * expected,
        "collapse {m:.4} vs expected ≈ {expected:.4}"
    );
}

#[test]
fn collapse_metric_needs_two() {
    let emb = vec![Embedding(vec![1.0, 0.0])];
    assert!(matches!(collapse_metric(&emb), Err(crate::Error::Input(_))));
}

// ── embedding extraction ─────────────────────────────────────────────

fn tiny_config() -> ModelConfig {
    ModelConfig {
        layers: 2,
        model_dim: 16,
        ffn_dim: 32,
        heads: 2,
        top_k: 2,
        feature_dim: 8,
        dropout: 0.1,
        max_frames: 32,
        token_mode: TokenMode::Ones,
    }
}

#[test]
fn extraction_is_deterministic() {
    let config = tiny_config();
    let (student, _) = init_model(&config, 5).unwrap();
    let feats = crate::features::FeatureSequence::from_raw(lcg(1, 6 * 8), 6, 8).unwrap();
    let e1 = extract_embeddings(&student, &config, &[feats.clone()], Precision::F64).unwrap();
    let e2 = extract_embeddings(&student, &config, &[feats], Precision::F64).unwrap();
    assert_eq!(e1[0], e2[0]);
}

#[test]
fn small_preset_embeddings_are_256_dimensional() {
    let config = ModelConfig::small();
    let (student, _) = init_model(&config, 5).unwrap();
    let feats = crate::features::FeatureSequence::from_raw(lcg(2, 5 * 80), 5, 80).unwrap();
    let e = extract_embeddings(&student, &config, &[feats], Precision::F64).unwrap();
    assert_eq!(e[0].dim(), 256);
}

#[test]
fn batched_extraction_matches_single() {
    let config = tiny_config();
    let (student, _) = init_model(&config, 9).unwrap();
    let segments: Vec<crate::features::FeatureSequence> = [4usize, 9, 6, 2]
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            crate::features::FeatureSequence::from_raw(lcg(40 + i as u64, t * 8), t, 8).unwrap()
        })
        .collect();
    let single = extract_embeddings(&student, &config, &segments, Precision::F64).unwrap();
    let batched = extract_embeddings_batched(&student, &config, &segments, Precision::F64).unwrap();
    for (s, b) in single.iter().zip(batched.iter()) {
        let diff: f64 = s
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-10, "64-bit batched/single drift {diff:.3e}");
    }
    // 32-bit mode at its stated tolerance
    let single32 = extract_embeddings(&student, &config, &segments, Precision::F32).unwrap();
    let batched32 =
        extract_embeddings_batched(&student, &config, &segments, Precision::F32).unwrap();
    for (s, b) in single32.iter().zip(batched32.iter()) {
        let diff: f64 = s
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-5, "32-bit batched/single drift {diff:.3e}");
    }
}

// ── output files ─────────────────────────────────────────────────────

#[test]
fn csv_outputs_are_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let embeddings: Vec<Embedding> = (0..6).map(|i| Embedding(lcg(i, 8))).collect();
    let labels: Vec<String> = (0..6).map(|i| format!("w{}", i % 2)).collect();
    let r = same_different(&embeddings, &labels).unwrap();
    let ap_path = dir.path().join("ap.csv");
    write_ap_summary(&ap_path, &r).unwrap();
    let text = std::fs::read_to_string(&ap_path).unwrap();
    assert!(text.starts_with("metric,value,n_same,n_diff\n"));
    assert_eq!(text.lines().count(), 3);

    let segs = vec![
        eval_seg("u0", &["a"]),
        eval_seg("u1", &["a"]),
        eval_seg("u2", &["b"]),
    ];
    let emb3: Vec<Embedding> = (0..3).map(|i| Embedding(lcg(i, 8))).collect();
    let curve = psed_curve(&segs, &emb3).unwrap();
    let psed_path = dir.path().join("psed.csv");
    write_psed_curve(&psed_path, &curve).unwrap();
    let text = std::fs::read_to_string(&psed_path).unwrap();
    assert!(text.starts_with("psed,mean_cos,count\n"));
    assert!(text.contains("4+,"));

    let many: Vec<Embedding> = (0..8).map(|i| Embedding(lcg(50 + i, 8))).collect();
    let p = pca_project(&many, 2).unwrap();
    let segs8: Vec<EvalSegment> = (0..8).map(|i| eval_seg(&format!("u{i}"), &["a"])).collect();
    let pca_path = dir.path().join("pca.csv");
    write_pca_coords(&pca_path, &segs8, &p).unwrap();
    let text = std::fs::read_to_string(&pca_path).unwrap();
    assert!(text.starts_with("id,word,speaker,x,y\n"));
    assert_eq!(text.lines().count(), 9);
}
