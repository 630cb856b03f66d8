use crate::error::{Error, Result};
use crate::numerics::{l2_norm, layer_norm_vec, Tape, Tensor, TensorId};

const TARGET_LN_EPS: f64 = 1e-5;
const NORM_FLOOR: f64 = 1e-8;

/// Build the self-supervised target from the teacher's per-block position-0
/// vectors: each of the top K blocks is layer-normalized (no affine) and the
/// K results are averaged. Computed on plain vectors — no gradient exists
/// through the teacher side.
pub fn build_target(layer_vectors: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    let l = layer_vectors.len();
    if k == 0 || k > l {
        return Err(Error::Config(format!("top-K {k} outside 1..={l}")));
    }
    let d = layer_vectors[l - 1].len();
    let mut acc = vec![0.0; d];
    for v in &layer_vectors[l - k..] {
        let ln = layer_norm_vec(v, TARGET_LN_EPS);
        for (a, x) in acc.iter_mut().zip(ln.iter()) {
            *a += x;
        }
    }
    let inv = 1.0 / k as f64;
    for a in acc.iter_mut() {
        *a *= inv;
    }
    Ok(acc)
}

/// Cosine distance 1 − cos(v, target) as a plain value.
pub fn cosine_loss(v: &[f64], target: &[f64]) -> Result<f64> {
    if v.len() != target.len() {
        return Err(Error::Dimension(format!(
            "vectors of {} and {} dims",
            v.len(),
            target.len()
        )));
    }
    let (nv, nt) = (l2_norm(v), l2_norm(target));
    if nv <= NORM_FLOOR || nt <= NORM_FLOOR {
        return Err(Error::Input(format!(
            "degenerate vector in cosine loss (norms {nv:.3e}, {nt:.3e})"
        )));
    }
    let dot: f64 = v.iter().zip(target.iter()).map(|(a, b)| a * b).sum();
    Ok(1.0 - dot / (nv * nt))
}

/// Cosine distance on the tape, differentiable with respect to `v` only;
/// the target enters as a constant.
pub fn cosine_loss_on_tape(tape: &mut Tape, v: TensorId, target: &[f64]) -> Result<TensorId> {
    let vd = tape.data(v);
    if vd.len() != target.len() {
        return Err(Error::Dimension(format!(
            "vectors of {} and {} dims",
            vd.len(),
            target.len()
        )));
    }
    let (nv, nt) = (l2_norm(vd), l2_norm(target));
    if nv <= NORM_FLOOR || nt <= NORM_FLOOR {
        return Err(Error::Input(format!(
            "degenerate vector in cosine loss (norms {nv:.3e}, {nt:.3e})"
        )));
    }
    let t = tape.constant(Tensor::new(target.to_vec(), &[target.len()])?);
    let dot_elems = tape.mul(v, t)?;
    let dot = tape.sum(dot_elems)?;
    let v_sq = tape.mul(v, v)?;
    let v_sq_sum = tape.sum(v_sq)?;
    let v_norm = tape.sqrt(v_sq_sum)?;
    let t_norm = tape.constant(Tensor::scalar(nt));
    let denom = tape.mul(v_norm, t_norm)?;
    let cos = tape.div(dot, denom)?;
    let neg = tape.scale(cos, -1.0)?;
    tape.add_const(neg, 1.0)
}
