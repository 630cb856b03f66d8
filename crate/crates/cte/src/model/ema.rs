use crate::error::{Error, Result};

use super::params::check_same_shapes;
use super::EncoderParams;

/// Teacher update ξ ← τ·ξ + (1−τ)·θ, elementwise over every learnable
/// tensor. Applied after each optimizer step; the positional table is
/// fixed and identical on both sides, so it is not touched.
pub fn ema_update(teacher: &mut EncoderParams, student: &EncoderParams, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Contract(format!("tau {tau} outside [0, 1]")));
    }
    check_same_shapes(teacher, student)?;
    let student_tensors: Vec<&crate::numerics::Tensor> =
        student.learnable().into_iter().map(|(_, t)| t).collect();
    for (xi, theta) in teacher.learnable_mut().into_iter().zip(student_tensors) {
        let dst = xi.data_mut();
        for (x, t) in dst.iter_mut().zip(theta.data().iter()) {
            *x = tau * *x + (1.0 - tau) * t;
        }
    }
    Ok(())
}
