use std::fmt;

use crate::error::{Error, Result};

use super::tape::{Precision, Tape, TensorId};
use super::tensor::Tensor;

/// Per-parameter outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

/// Result of comparing analytic gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub h: f64,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_err <= self.tol)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_rel_err)
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "grad check (h = {:.1e}, tol = {:.1e}): {}",
            self.h,
            self.tol,
            if self.pass() { "PASS" } else { "FAIL" }
        )?;
        for e in &self.entries {
            writeln!(
                f,
                "  {:30} max rel err {:.3e} at [{}] (analytic {:+.6e}, numeric {:+.6e}){}",
                e.name,
                e.max_rel_err,
                e.worst_index,
                e.analytic_at_worst,
                e.numeric_at_worst,
                if e.max_rel_err <= self.tol { "" } else { "  <-- FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Central differences of a unit-scale loss carry ~eps·|f|/h ≈ 1e-11
/// of roundoff noise at h = 1e-5; gradients below this floor are compared
/// against it rather than against their own magnitude.
const REL_FLOOR: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs()).max(REL_FLOOR);
    (a - n).abs() / scale
}

/// Compare the tape's analytic gradients of a scalar function against
/// central finite differences, parameter by parameter.
///
/// `build` must deterministically reconstruct the loss from the given
/// leaves; it is evaluated twice up front and a bitwise mismatch is
/// reported as a determinism error. Runs in 64-bit mode regardless of
/// what the surrounding code uses.
pub fn grad_check<F>(
    build: F,
    params: &[(String, Tensor)],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[TensorId]) -> Result<TensorId>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new(Precision::F64);
        let ids: Vec<TensorId> = values.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let loss = build(&mut tape, &ids)?;
        tape.scalar_value(loss)
    };

    let values: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();

    let v1 = eval(&values)?;
    let v2 = eval(&values)?;
    if v1.to_bits() != v2.to_bits() {
        return Err(Error::Determinism(format!(
            "two evaluations differ: {v1:?} vs {v2:?}"
        )));
    }

    // Analytic pass.
    let mut tape = Tape::new(Precision::F64);
    let ids: Vec<TensorId> = values.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = build(&mut tape, &ids)?;
    tape.backward(loss)?;

    let mut entries = Vec::with_capacity(params.len());
    for (p, (name, tensor)) in params.iter().enumerate() {
        let analytic: Vec<f64> = match tape.grad(ids[p]) {
            Some(g) => g.to_vec(),
            None => vec![0.0; tensor.numel()],
        };
        let mut worst = GradCheckEntry {
            name: name.clone(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic_at_worst: analytic.first().copied().unwrap_or(0.0),
            numeric_at_worst: 0.0,
        };
        for e in 0..tensor.numel() {
            let mut plus = values.clone();
            plus[p].data_mut()[e] += h;
            let fp = eval(&plus)?;
            let mut minus = values.clone();
            minus[p].data_mut()[e] -= h;
            let fm = eval(&minus)?;
            let numeric = (fp - fm) / (2.0 * h);
            let err = rel_err(analytic[e], numeric);
            if err > worst.max_rel_err {
                worst.max_rel_err = err;
                worst.worst_index = e;
                worst.analytic_at_worst = analytic[e];
                worst.numeric_at_worst = numeric;
            }
        }
        entries.push(worst);
    }

    Ok(GradCheckReport { entries, h, tol })
}
