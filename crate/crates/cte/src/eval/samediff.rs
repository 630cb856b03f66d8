use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Embedding;
use crate::numerics::cosine_similarity;

/// One scored unordered segment pair.
#[derive(Clone, Debug)]
pub struct PairScore {
    pub a: usize,
    pub b: usize,
    pub same: bool,
    pub score: f64,
}

/// Scored pair list plus both average-precision summaries.
#[derive(Clone, Debug)]
pub struct SameDiffResult {
    pub pairs: Vec<PairScore>,
    /// Area under the ROC curve (Mann-Whitney form, ties counted ½).
    pub ap_roc: f64,
    /// Precision-recall average precision (precision averaged at each
    /// positive after a deterministic descending sort).
    pub ap_pr: f64,
    pub n_same: usize,
    pub n_diff: usize,
}

/// ROC area over a scored/labelled list using integer pair counting:
/// (2·concordant + ties) / (2·P·N). Exact up to one final division.
pub fn roc_auc(scored: &[(f64, bool)]) -> Result<f64> {
    let p = scored.iter().filter(|(_, s)| *s).count() as u64;
    let n = scored.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(Error::Input(format!(
            "ROC needs both classes (got {p} positive, {n} negative)"
        )));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&i, &j| scored[i].0.partial_cmp(&scored[j].0).unwrap());
    let mut concordant: u64 = 0;
    let mut ties: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos_here, mut neg_here) = (0u64, 0u64);
        while j < order.len() && scored[order[j]].0 == scored[order[i]].0 {
            if scored[order[j]].1 {
                pos_here += 1;
            } else {
                neg_here += 1;
            }
            j += 1;
        }
        concordant += pos_here * neg_below;
        ties += pos_here * neg_here;
        neg_below += neg_here;
        i = j;
    }
    Ok((2 * concordant + ties) as f64 / (2 * p * n) as f64)
}

/// Precision-recall AP: sort by (score desc, index asc), average the
/// precision at every positive.
pub fn pr_ap(scored: &[(f64, bool)]) -> Result<f64> {
    let p = scored.iter().filter(|(_, s)| *s).count();
    if p == 0 || p == scored.len() {
        return Err(Error::Input("PR-AP needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&i, &j| {
        scored[j]
            .0
            .partial_cmp(&scored[i].0)
            .unwrap()
            .then(i.cmp(&j))
    });
    let mut tp = 0u64;
    let mut sum = 0.0;
    for (k, &idx) in order.iter().enumerate() {
        if scored[idx].1 {
            tp += 1;
            sum += tp as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / p as f64)
}

/// Summarize an already-scored pair list (used directly by the DTW
/// baseline, where similarity is the negated alignment cost).
pub fn summarize_pairs(pairs: Vec<PairScore>) -> Result<SameDiffResult> {
    let scored: Vec<(f64, bool)> = pairs.iter().map(|p| (p.score, p.same)).collect();
    let n_same = scored.iter().filter(|(_, s)| *s).count();
    let n_diff = scored.len() - n_same;
    if n_same == 0 || n_diff == 0 {
        return Err(Error::Input(format!(
            "degenerate label set: {n_same} same pairs, {n_diff} different pairs"
        )));
    }
    let ap_roc = roc_auc(&scored)?;
    let ap_pr = pr_ap(&scored)?;
    Ok(SameDiffResult {
        pairs,
        ap_roc,
        ap_pr,
        n_same,
        n_diff,
    })
}

/// Score every unordered pair of embeddings by cosine similarity and
/// summarize the same-different task with both AP conventions.
pub fn same_different(embeddings: &[Embedding], labels: &[String]) -> Result<SameDiffResult> {
    if embeddings.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} embeddings, {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    if embeddings.len() < 2 {
        return Err(Error::Input("need at least two segments".into()));
    }
    let n = embeddings.len();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pairs.push(PairScore {
                a: i,
                b: j,
                same: labels[i] == labels[j],
                score: cosine_similarity(embeddings[i].as_slice(), embeddings[j].as_slice()),
            });
        }
    }
    summarize_pairs(pairs)
}

/// CSV summary: `metric,value,n_same,n_diff`.
pub fn write_ap_summary(path: &Path, result: &SameDiffResult) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "metric,value,n_same,n_diff")?;
    writeln!(
        f,
        "ap_roc,{},{},{}",
        result.ap_roc, result.n_same, result.n_diff
    )?;
    writeln!(
        f,
        "ap_pr,{},{},{}",
        result.ap_pr, result.n_same, result.n_diff
    )?;
    Ok(())
}
