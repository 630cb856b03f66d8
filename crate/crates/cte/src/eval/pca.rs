use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Embedding;

use super::EvalSegment;

/// PCA of a set of embeddings: top-k components of the covariance by
/// deflated power iteration.
#[derive(Clone, Debug)]
pub struct PcaProjection {
    /// n×k coordinates in component space, row-major.
    pub coords: Vec<Vec<f64>>,
    /// k orthonormal components, each D-dimensional.
    pub components: Vec<Vec<f64>>,
    /// Fraction of total variance captured per component, non-increasing.
    pub explained: Vec<f64>,
    /// True when fewer than the requested components exist (rank deficit).
    pub reduced_rank: bool,
}

const POWER_ITERS: usize = 2_000;
const CONVERGENCE: f64 = 1e-14;
const RANK_FLOOR: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn mat_vec(c: &[f64], v: &[f64], out: &mut [f64]) {
    let d = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&c[i * d..(i + 1) * d], v);
    }
}

/// Deterministic pseudo-random start vector for power iteration.
fn start_vector(d: usize, component: usize) -> Vec<f64> {
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ (component as u64 + 1);
    (0..d)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Project embeddings onto their top-k principal components.
pub fn pca_project(embeddings: &[Embedding], k: usize) -> Result<PcaProjection> {
    if embeddings.len() < k + 1 {
        return Err(Error::Input(format!(
            "PCA with k = {k} needs at least {} embeddings, got {}",
            k + 1,
            embeddings.len()
        )));
    }
    let n = embeddings.len();
    let d = embeddings[0].dim();
    // mean-center
    let mut mean = vec![0.0; d];
    for e in embeddings {
        for (m, x) in mean.iter_mut().zip(e.as_slice()) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| e.as_slice().iter().zip(mean.iter()).map(|(x, m)| x - m).collect())
        .collect();

    // sample covariance, D×D
    let mut cov = vec![0.0; d * d];
    for row in &centered {
        for i in 0..d {
            let ri = row[i];
            if ri != 0.0 {
                let dst = &mut cov[i * d..(i + 1) * d];
                for (c, x) in dst.iter_mut().zip(row.iter()) {
                    *c += ri * x;
                }
            }
        }
    }
    let denom = (n - 1) as f64;
    for c in cov.iter_mut() {
        *c /= denom;
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues: Vec<f64> = Vec::with_capacity(k);
    let mut deflated = cov;
    for comp in 0..k {
        if trace <= 0.0 {
            break;
        }
        let mut v = start_vector(d, comp);
        // keep the iterate out of the span of found components
        for u in &components {
            let c = dot(&v, u);
            for (x, y) in v.iter_mut().zip(u.iter()) {
                *x -= c * y;
            }
        }
        normalize(&mut v);
        let mut lambda = 0.0;
        let mut buf = vec![0.0; d];
        for _ in 0..POWER_ITERS {
            mat_vec(&deflated, &v, &mut buf);
            for u in &components {
                let c = dot(&buf, u);
                for (x, y) in buf.iter_mut().zip(u.iter()) {
                    *x -= c * y;
                }
            }
            let norm = normalize(&mut buf);
            std::mem::swap(&mut v, &mut buf);
            let new_lambda = norm;
            if (new_lambda - lambda).abs() <= CONVERGENCE * trace.max(1.0) {
                lambda = new_lambda;
                break;
            }
            lambda = new_lambda;
        }
        if lambda <= RANK_FLOOR * trace.max(1.0) {
            break; // rank deficit: remaining variance is numerically zero
        }
        // sign convention: largest-magnitude coordinate positive
        let argmax = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        if v[argmax] < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
        // deflate
        for i in 0..d {
            for j in 0..d {
                deflated[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        eigenvalues.push(lambda);
        components.push(v);
    }

    let reduced_rank = components.len() < k;
    let explained: Vec<f64> = eigenvalues
        .iter()
        .map(|l| if trace > 0.0 { l / trace } else { 0.0 })
        .collect();
    let coords: Vec<Vec<f64>> = centered
        .iter()
        .map(|row| components.iter().map(|u| dot(row, u)).collect())
        .collect();
    Ok(PcaProjection {
        coords,
        components,
        explained,
        reduced_rank,
    })
}

/// CSV: `id,word,speaker,x,y` (further components are appended as extra
/// columns when k > 2).
pub fn write_pca_coords(
    path: &Path,
    segments: &[EvalSegment],
    projection: &PcaProjection,
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "id,word,speaker,x,y")?;
    for (seg, coords) in segments.iter().zip(projection.coords.iter()) {
        let word = seg.segment.word_id.as_deref().unwrap_or("-");
        let cols: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
        writeln!(
            f,
            "{},{},{},{}",
            seg.segment.id(),
            word,
            seg.speaker_id,
            cols.join(",")
        )?;
    }
    Ok(())
}
