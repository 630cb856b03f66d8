use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::model::Embedding;
use crate::numerics::cosine_similarity;

use super::EvalSegment;

/// Phoneme sequence edit distance: Levenshtein with unit costs.
pub fn psed<T: PartialEq>(p1: &[T], p2: &[T]) -> usize {
    if p1.is_empty() {
        return p2.len();
    }
    let mut prev: Vec<usize> = (0..=p2.len()).collect();
    let mut cur = vec![0usize; p2.len() + 1];
    for (i, a) in p1.iter().enumerate() {
        cur[0] = i + 1;
        for (j, b) in p2.iter().enumerate() {
            let sub = prev[j] + usize::from(a != b);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[p2.len()]
}

/// Buckets 0, 1, 2, 3 and "4+" (index 4).
pub const PSED_BUCKETS: usize = 5;

/// Mean pairwise cosine similarity per PSED bucket.
#[derive(Clone, Debug)]
pub struct PsedBucket {
    /// 0..=3 exact distances, 4 aggregates every distance >= 4.
    pub bucket: usize,
    /// Undefined when the bucket is empty.
    pub mean_cos: Option<f64>,
    pub count: usize,
}

/// Compare every unordered segment pair: bucket by the edit distance of
/// their phone sequences, average the embedding cosine similarity.
pub fn psed_curve(segments: &[EvalSegment], embeddings: &[Embedding]) -> Result<Vec<PsedBucket>> {
    if segments.len() != embeddings.len() {
        return Err(crate::Error::Dimension(format!(
            "{} segments, {} embeddings",
            segments.len(),
            embeddings.len()
        )));
    }
    let mut sums = [0.0f64; PSED_BUCKETS];
    let mut counts = [0usize; PSED_BUCKETS];
    for i in 0..segments.len() {
        let pi = segments[i].phones.as_ref().ok_or_else(|| {
            crate::Error::Input(format!("segment {} has no phone sequence", segments[i].segment.id()))
        })?;
        for j in i + 1..segments.len() {
            let pj = segments[j].phones.as_ref().ok_or_else(|| {
                crate::Error::Input(format!(
                    "segment {} has no phone sequence",
                    segments[j].segment.id()
                ))
            })?;
            let d = psed(pi, pj).min(PSED_BUCKETS - 1);
            sums[d] += cosine_similarity(embeddings[i].as_slice(), embeddings[j].as_slice());
            counts[d] += 1;
        }
    }
    Ok((0..PSED_BUCKETS)
        .map(|b| PsedBucket {
            bucket: b,
            mean_cos: (counts[b] > 0).then(|| sums[b] / counts[b] as f64),
            count: counts[b],
        })
        .collect())
}

/// CSV: `psed,mean_cos,count` with `NA` for empty buckets and `4+` for the
/// aggregate bucket.
pub fn write_psed_curve(path: &Path, curve: &[PsedBucket]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "psed,mean_cos,count")?;
    for b in curve {
        let label = if b.bucket == PSED_BUCKETS - 1 {
            "4+".to_string()
        } else {
            b.bucket.to_string()
        };
        match b.mean_cos {
            Some(m) => writeln!(f, "{label},{m},{}", b.count)?,
            None => writeln!(f, "{label},NA,0")?,
        }
    }
    Ok(())
}
