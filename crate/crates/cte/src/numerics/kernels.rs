//! Raw dense kernels behind the tape ops.
//!
//! The GEMM itself is delegated to `matrixmultiply`, which packs panels and
//! dispatches SIMD microkernels at runtime. Transposed operands are passed
//! by stride, so the backward pass never materializes a transpose.

/// General C = alpha·op(A)·op(B) + beta·C over row-major storage.
///
/// `trans_a` means the logical m×k operand is stored as a k×m matrix
/// (likewise for `trans_b` and its n×k storage).
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    trans_a: bool,
    trans_b: bool,
    alpha: f64,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
    m: usize,
    k: usize,
    n: usize,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// c[m,n] = a[m,k] · b[k,n].
pub fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    gemm(false, false, 1.0, a, b, 0.0, c, m, k, n);
}

/// c[m,n] = alpha · a[m,k] · b[n,k]ᵀ  (b stored row-major n×k).
pub fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, alpha: f64) {
    gemm(false, true, alpha, a, b, 0.0, c, m, k, n);
}

/// c[m,n] += alpha · a[m,k] · b[n,k]ᵀ.
pub fn gemm_nt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, alpha: f64) {
    gemm(false, true, alpha, a, b, 1.0, c, m, k, n);
}

/// c[m,n] += alpha · a[k,m]ᵀ · b[k,n]  (a stored row-major k×m).
pub fn gemm_tn_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, alpha: f64) {
    gemm(true, false, alpha, a, b, 1.0, c, m, k, n);
}

/// c[m,n] += alpha · a[m,k] · b[k,n].
pub fn gemm_nn_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, alpha: f64) {
    gemm(false, false, alpha, a, b, 1.0, c, m, k, n);
}

/// Fully strided GEMM over raw slices: C = alpha·A·B + beta·C with explicit
/// row/column strides per operand. Callers guarantee the strided index
/// ranges stay inside the slices; the head-sliced attention views do.
#[allow(clippy::too_many_arguments)]
pub fn gemm_strided(
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
    m: usize,
    k: usize,
    n: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!((m as isize - 1) * rsa + (k as isize - 1) * csa < a.len() as isize);
    debug_assert!((k as isize - 1) * rsb + (n as isize - 1) * csb < b.len() as isize);
    debug_assert!((m as isize - 1) * rsc + (n as isize - 1) * csc < c.len() as isize);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Per-row mean and 1/std (biased variance) over the last axis.
pub fn row_moments(x: &[f64], d: usize, eps: f64, mean: &mut [f64], inv_std: &mut [f64]) {
    let rows = x.len() / d;
    debug_assert_eq!(rows, mean.len());
    debug_assert_eq!(rows, inv_std.len());
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mut s = 0.0;
        for &v in row {
            s += v;
        }
        let mu = s / d as f64;
        let mut ss = 0.0;
        for &v in row {
            let c = v - mu;
            ss += c * c;
        }
        mean[r] = mu;
        inv_std[r] = 1.0 / (ss / d as f64 + eps).sqrt();
    }
}
