//! Evaluation: embedding extraction, the same-different task with both
//! ROC-area and precision-recall average precision, phone-edit-distance
//! analysis, PCA projection, collapse diagnostics, and the downsampling
//! and DTW baselines.

mod baseline;
mod pca;
mod psed;
mod samediff;

pub use baseline::{downsampling_baseline, dtw_distance, DOWNSAMPLE_FRAMES};
pub use pca::{pca_project, write_pca_coords, PcaProjection};
pub use psed::{psed, psed_curve, write_psed_curve, PsedBucket, PSED_BUCKETS};
pub use samediff::{
    pr_ap, roc_auc, same_different, summarize_pairs, write_ap_summary, PairScore, SameDiffResult,
};

use crate::dataset::WordSegment;
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::model::{encode_features, encode_padded, Embedding, EncoderParams, ModelConfig, TapedEncoder};
use crate::numerics::{Precision, Tape};

/// A segment prepared for evaluation: features plus optional phone
/// transcription and the speaker tag used in reports.
#[derive(Clone, Debug)]
pub struct EvalSegment {
    pub segment: WordSegment,
    pub features: FeatureSequence,
    pub phones: Option<Vec<String>>,
    pub speaker_id: String,
}

/// Extract one embedding per segment with the student encoder; dropout is
/// disabled, the teacher plays no part.
pub fn extract_embeddings(
    student: &EncoderParams,
    config: &ModelConfig,
    segments: &[FeatureSequence],
    precision: Precision,
) -> Result<Vec<Embedding>> {
    let mut out = Vec::with_capacity(segments.len());
    for feats in segments {
        let mut tape = Tape::new(precision);
        let enc = TapedEncoder::stage(&mut tape, student, false);
        let e = encode_features(&mut tape, &enc, config, feats, None)?;
        out.push(Embedding(tape.data(e.v).to_vec()));
    }
    Ok(out)
}

/// Batched extraction through the padded/masked path: all segments are
/// right-padded to a common length, each row carries its mask. By the
/// masking contract this matches one-at-a-time extraction.
pub fn extract_embeddings_batched(
    student: &EncoderParams,
    config: &ModelConfig,
    segments: &[FeatureSequence],
    precision: Precision,
) -> Result<Vec<Embedding>> {
    if segments.is_empty() {
        return Ok(Vec::new());
    }
    let f = config.feature_dim;
    let tmax = segments.iter().map(|s| s.num_frames()).max().unwrap() + 1;
    let fill = config.token_mode.fill();
    let mut out = Vec::with_capacity(segments.len());
    for feats in segments {
        let mut row = vec![0.0; tmax * f];
        row[..f].fill(fill);
        row[f..(feats.num_frames() + 1) * f].copy_from_slice(feats.data());
        let mut mask = vec![false; tmax];
        mask[..feats.num_frames() + 1].fill(true);
        let mut tape = Tape::new(precision);
        let enc = TapedEncoder::stage(&mut tape, student, false);
        let e = encode_padded(&mut tape, &enc, config, &row, &mask, None)?;
        out.push(Embedding(tape.data(e.v).to_vec()));
    }
    Ok(out)
}

/// Mean per-dimension standard deviation of length-normalized embeddings.
/// Near zero means the embedding space has collapsed to a point.
pub fn collapse_metric(embeddings: &[Embedding]) -> Result<f64> {
    if embeddings.len() < 2 {
        return Err(Error::Input("collapse metric needs at least 2 embeddings".into()));
    }
    let n = embeddings.len();
    let d = embeddings[0].dim();
    let mut normalized: Vec<Vec<f64>> = Vec::with_capacity(n);
    for e in embeddings {
        let norm = crate::numerics::l2_norm(e.as_slice());
        normalized.push(if norm > 0.0 {
            e.as_slice().iter().map(|x| x / norm).collect()
        } else {
            vec![0.0; d]
        });
    }
    let mut mean = vec![0.0; d];
    for v in &normalized {
        for (m, x) in mean.iter_mut().zip(v.iter()) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut total = 0.0;
    for j in 0..d {
        let var = normalized
            .iter()
            .map(|v| (v[j] - mean[j]) * (v[j] - mean[j]))
            .sum::<f64>()
            / n as f64;
        total += var.sqrt();
    }
    Ok(total / d as f64)
}

#[cfg(test)]
mod tests;
