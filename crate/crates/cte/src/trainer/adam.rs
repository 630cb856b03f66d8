use crate::error::{Error, Result};

use super::{OptimConfig, TrainState};

/// One bias-corrected Adam update of the student parameters.
///
/// `grads` is aligned with `EncoderParams::learnable` and is consumed
/// pre-multiplied by `grad_scale` (global-norm clipping folds in here);
/// `t` is the 1-based update count used for bias correction. A non-finite
/// gradient aborts with the step and parameter name rather than
/// corrupting the state.
pub fn adam_step(
    state: &mut TrainState,
    grads: &[&[f64]],
    grad_scale: f64,
    lr_t: f64,
    optim: &OptimConfig,
    t: u64,
) -> Result<()> {
    let names: Vec<String> = state
        .student
        .learnable()
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    if grads.len() != names.len() {
        return Err(Error::Contract(format!(
            "{} gradients for {} parameters",
            grads.len(),
            names.len()
        )));
    }
    for (name, g) in names.iter().zip(grads.iter()) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {name} at step {}",
                state.step
            )));
        }
    }

    let (b1, b2, eps) = (optim.beta1, optim.beta2, optim.adam_eps);
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    let tensors = state.student.learnable_mut();
    for ((theta, g), (m, v)) in tensors
        .into_iter()
        .zip(grads.iter())
        .zip(state.adam_m.iter_mut().zip(state.adam_v.iter_mut()))
    {
        let td = theta.data_mut();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..td.len() {
            let gi = g[i] * grad_scale;
            md[i] = b1 * md[i] + (1.0 - b1) * gi;
            vd[i] = b2 * vd[i] + (1.0 - b2) * gi * gi;
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            td[i] -= lr_t * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
