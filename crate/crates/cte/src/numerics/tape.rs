use std::sync::Arc;

use crate::error::{Error, Result};

use super::kernels;
use super::special;
use super::tensor::Tensor;

/// Numeric mode of a tape. F32 keeps f64 storage but rounds every op result
/// (including leaves) to f32 precision; a graph never mixes modes.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TensorId(pub(crate) usize);

enum Op {
    Leaf,
    /// C = A·B
    MatMul { a: TensorId, b: TensorId },
    /// C = alpha·A·Bᵀ
    MatMulNT { a: TensorId, b: TensorId, alpha: f64 },
    /// C = A·W + bias (bias broadcast over rows)
    Linear {
        a: TensorId,
        w: TensorId,
        bias: TensorId,
    },
    /// Multi-head scaled-dot-product attention, block-diagonal over row
    /// segments; the per-head softmax probabilities are cached for backward.
    Attention {
        q: TensorId,
        k: TensorId,
        v: TensorId,
        heads: usize,
        scale: f64,
        segments: Arc<Vec<(usize, usize)>>,
    },
    Add { a: TensorId, b: TensorId },
    /// [m,n] + broadcast row [n]
    AddRow { a: TensorId, bias: TensorId },
    Mul { a: TensorId, b: TensorId },
    Div { a: TensorId, b: TensorId },
    Scale { a: TensorId, c: f64 },
    AddConst { a: TensorId },
    Transpose { a: TensorId },
    Gelu { a: TensorId },
    Sqrt { a: TensorId },
    LayerNorm {
        a: TensorId,
        gamma: Option<TensorId>,
        beta: Option<TensorId>,
    },
    SoftmaxRows { a: TensorId },
    Sum { a: TensorId },
    Row { a: TensorId, index: usize },
    Cols {
        a: TensorId,
        start: usize,
        len: usize,
    },
    ConcatCols { parts: Vec<TensorId> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    needs_grad: bool,
    /// Leaf gradient accumulator; repeated backward calls add into it.
    grad: Option<Vec<f64>>,
    /// Cached forward quantities reused by backward (GELU Φ, LN moments).
    aux: Option<Vec<f64>>,
}

/// Reverse-mode tape. Ops append nodes; [`Tape::backward`] walks them in
/// reverse. One tape records one computation graph; distinct tapes are
/// independent.
pub struct Tape {
    nodes: Vec<Node>,
    precision: Precision,
}

impl Tape {
    pub fn new(precision: Precision) -> Self {
        Tape {
            nodes: Vec::new(),
            precision,
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn seal(&self, mut data: Vec<f64>) -> Vec<f64> {
        if self.precision == Precision::F32 {
            for v in data.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
        data
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool, aux: Option<Vec<f64>>) -> TensorId {
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            value,
            op,
            requires_grad: false,
            needs_grad,
            grad: None,
            aux,
        });
        id
    }

    fn node(&self, id: TensorId) -> &Node {
        &self.nodes[id.0]
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Insert a leaf. In F64 mode the tensor's buffer is shared, not copied.
    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> TensorId {
        let t = if self.precision == Precision::F32 {
            let data = self.seal(t.data().to_vec());
            Tensor::from_shared(Arc::new(data), t.shape())
        } else {
            t
        };
        let id = TensorId(self.nodes.len());
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad,
            needs_grad: requires_grad,
            grad: None,
            aux: None,
        });
        id
    }

    pub fn constant(&mut self, t: Tensor) -> TensorId {
        self.leaf(t, false)
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.node(id).value
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        self.node(id).value.data()
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.node(id).value.shape()
    }

    pub fn scalar_value(&self, id: TensorId) -> Result<f64> {
        let v = self.data(id);
        if v.len() != 1 {
            return Err(Error::Contract(format!(
                "expected scalar, got shape {:?}",
                self.shape(id)
            )));
        }
        Ok(v[0])
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.node(id).grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in self.nodes.iter_mut() {
            n.grad = None;
        }
    }

    // ── forward ops ──────────────────────────────────────────────────

    fn matmul_dims(&self, a: TensorId, b: TensorId, bt: bool) -> Result<(usize, usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa.len() != 2 || sb.len() != 2 {
            return Err(Error::Dimension(format!(
                "matmul needs 2-d operands, got {sa:?} and {sb:?}"
            )));
        }
        let (m, k) = (sa[0], sa[1]);
        let (bk, n) = if bt { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if k != bk {
            return Err(Error::Dimension(format!(
                "matmul inner extents differ: {sa:?} vs {sb:?}{}",
                if bt { " (transposed)" } else { "" }
            )));
        }
        Ok((m, k, n))
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, k, n) = self.matmul_dims(a, b, false)?;
        let mut c = vec![0.0; m * n];
        kernels::gemm_nn(self.data(a), self.data(b), &mut c, m, k, n);
        let c = self.seal(c);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(c, &[m, n])?, Op::MatMul { a, b }, needs, None))
    }

    /// C = A·Bᵀ without materializing the transpose.
    pub fn matmul_nt(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.matmul_nt_scaled(a, b, 1.0)
    }

    /// C = alpha·A·Bᵀ; the scale is fused into the kernel.
    pub fn matmul_nt_scaled(&mut self, a: TensorId, b: TensorId, alpha: f64) -> Result<TensorId> {
        let (m, k, n) = self.matmul_dims(a, b, true)?;
        let mut c = vec![0.0; m * n];
        kernels::gemm_nt(self.data(a), self.data(b), &mut c, m, k, n, alpha);
        let c = self.seal(c);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            Tensor::new(c, &[m, n])?,
            Op::MatMulNT { a, b, alpha },
            needs,
            None,
        ))
    }

    /// C = A·W + bias in one kernel call: C is seeded with the broadcast
    /// bias and the GEMM accumulates into it.
    pub fn linear(&mut self, a: TensorId, w: TensorId, bias: TensorId) -> Result<TensorId> {
        let (m, k, n) = self.matmul_dims(a, w, false)?;
        let sb = self.shape(bias);
        if sb != [n] {
            return Err(Error::Dimension(format!(
                "linear: bias {sb:?} does not match output width {n}"
            )));
        }
        let mut c = Vec::with_capacity(m * n);
        let bv = self.data(bias);
        for _ in 0..m {
            c.extend_from_slice(bv);
        }
        kernels::gemm_nn_acc(self.data(a), self.data(w), &mut c, m, k, n, 1.0);
        let c = self.seal(c);
        let needs = self.needs(a) || self.needs(w) || self.needs(bias);
        Ok(self.push(
            Tensor::new(c, &[m, n])?,
            Op::Linear { a, w, bias },
            needs,
            None,
        ))
    }

    fn same_shape(&self, a: TensorId, b: TensorId, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b, "add")?;
        let data: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b).iter())
            .map(|(x, y)| x + y)
            .collect();
        let data = self.seal(data);
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(data, &shape)?, Op::Add { a, b }, needs, None))
    }

    pub fn add_row(&mut self, a: TensorId, bias: TensorId) -> Result<TensorId> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(bias);
        let n = *sa.last().unwrap();
        if sb != [n] {
            return Err(Error::Dimension(format!(
                "add_row: bias {sb:?} does not match last axis of {sa:?}"
            )));
        }
        let bv = self.data(bias).to_vec();
        let mut data = self.data(a).to_vec();
        for row in data.chunks_exact_mut(n) {
            for (x, b) in row.iter_mut().zip(bv.iter()) {
                *x += b;
            }
        }
        let data = self.seal(data);
        let needs = self.needs(a) || self.needs(bias);
        Ok(self.push(Tensor::new(data, &sa)?, Op::AddRow { a, bias }, needs, None))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b, "mul")?;
        let data: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b).iter())
            .map(|(x, y)| x * y)
            .collect();
        let data = self.seal(data);
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(data, &shape)?, Op::Mul { a, b }, needs, None))
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b, "div")?;
        let data: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b).iter())
            .map(|(x, y)| x / y)
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("div produced a non-finite value".into()));
        }
        let data = self.seal(data);
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(data, &shape)?, Op::Div { a, b }, needs, None))
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let data: Vec<f64> = self.data(a).iter().map(|x| x * c).collect();
        let data = self.seal(data);
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(data, &shape)?, Op::Scale { a, c }, needs, None))
    }

    pub fn add_const(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let data: Vec<f64> = self.data(a).iter().map(|x| x + c).collect();
        let data = self.seal(data);
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(data, &shape)?, Op::AddConst { a }, needs, None))
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let sa = self.shape(a);
        if sa.len() != 2 {
            return Err(Error::Dimension(format!("transpose needs 2-d, got {sa:?}")));
        }
        let (m, n) = (sa[0], sa[1]);
        let src = self.data(a);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(data, &[n, m])?, Op::Transpose { a }, needs, None))
    }

    /// Exact GELU, elementwise: x·Φ(x).
    pub fn gelu(&mut self, a: TensorId) -> Result<TensorId> {
        let xs = self.data(a);
        let mut out = vec![0.0; xs.len()];
        let mut cdf = vec![0.0; xs.len()];
        special::gelu_slice(xs, &mut out, &mut cdf);
        let out = self.seal(out);
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(out, &shape)?, Op::Gelu { a }, needs, Some(cdf)))
    }

    pub fn sqrt(&mut self, a: TensorId) -> Result<TensorId> {
        let data: Vec<f64> = self.data(a).iter().map(|x| x.sqrt()).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sqrt of negative value".into()));
        }
        let data = self.seal(data);
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(data, &shape)?, Op::Sqrt { a }, needs, None))
    }

    /// Layer normalization over the last axis; biased variance, optional affine.
    pub fn layer_norm(
        &mut self,
        a: TensorId,
        gamma: Option<TensorId>,
        beta: Option<TensorId>,
        eps: f64,
    ) -> Result<TensorId> {
        let shape = self.shape(a).to_vec();
        let d = *shape.last().unwrap();
        if d < 2 {
            return Err(Error::Dimension(format!(
                "layer_norm: last axis must have at least 2 elements, got {d}"
            )));
        }
        if eps <= 0.0 {
            return Err(Error::Contract("layer_norm: eps must be positive".into()));
        }
        for (t, name) in [(gamma, "gamma"), (beta, "beta")] {
            if let Some(t) = t {
                if self.shape(t) != [d] {
                    return Err(Error::Dimension(format!(
                        "layer_norm: {name} shape {:?} does not match axis {d}",
                        self.shape(t)
                    )));
                }
            }
        }
        let xs = self.data(a);
        let rows = xs.len() / d;
        let mut mean = vec![0.0; rows];
        let mut inv_std = vec![0.0; rows];
        kernels::row_moments(xs, d, eps, &mut mean, &mut inv_std);

        let g = gamma.map(|t| self.data(t).to_vec());
        let b = beta.map(|t| self.data(t).to_vec());
        let xs = self.data(a);
        let mut out = vec![0.0; xs.len()];
        for r in 0..rows {
            let src = &xs[r * d..(r + 1) * d];
            let dst = &mut out[r * d..(r + 1) * d];
            let (mu, is) = (mean[r], inv_std[r]);
            match (&g, &b) {
                (Some(g), Some(b)) => {
                    for j in 0..d {
                        dst[j] = (src[j] - mu) * is * g[j] + b[j];
                    }
                }
                (Some(g), None) => {
                    for j in 0..d {
                        dst[j] = (src[j] - mu) * is * g[j];
                    }
                }
                (None, Some(b)) => {
                    for j in 0..d {
                        dst[j] = (src[j] - mu) * is + b[j];
                    }
                }
                (None, None) => {
                    for j in 0..d {
                        dst[j] = (src[j] - mu) * is;
                    }
                }
            }
        }
        let out = self.seal(out);
        let mut aux = mean;
        aux.extend_from_slice(&inv_std);
        let needs =
            self.needs(a) || gamma.is_some_and(|t| self.needs(t)) || beta.is_some_and(|t| self.needs(t));
        Ok(self.push(
            Tensor::new(out, &shape)?,
            Op::LayerNorm { a, gamma, beta },
            needs,
            Some(aux),
        ))
    }

    /// Row softmax over the last axis with max-subtraction. `mask`, when
    /// given, has the tensor's full shape; masked positions come out exactly
    /// zero and contribute nothing to the normalization.
    pub fn softmax_rows(&mut self, a: TensorId, mask: Option<Arc<Vec<bool>>>) -> Result<TensorId> {
        let shape = self.shape(a).to_vec();
        let d = *shape.last().unwrap();
        let xs = self.data(a);
        if let Some(m) = &mask {
            if m.len() != xs.len() {
                return Err(Error::Dimension(format!(
                    "softmax mask has {} entries, tensor has {}",
                    m.len(),
                    xs.len()
                )));
            }
        }
        let rows = xs.len() / d;
        let mut out = vec![0.0; xs.len()];
        let mut shifted = vec![0.0; d];
        for r in 0..rows {
            let src = &xs[r * d..(r + 1) * d];
            let mrow = mask.as_ref().map(|m| &m[r * d..(r + 1) * d]);
            let mut mx = f64::NEG_INFINITY;
            match mrow {
                Some(mrow) => {
                    for j in 0..d {
                        if mrow[j] && src[j] > mx {
                            mx = src[j];
                        }
                    }
                }
                None => {
                    for &v in src {
                        if v > mx {
                            mx = v;
                        }
                    }
                }
            }
            if mx == f64::NEG_INFINITY {
                return Err(Error::Contract(format!("softmax row {r} is fully masked")));
            }
            for j in 0..d {
                shifted[j] = src[j] - mx;
            }
            let dst = &mut out[r * d..(r + 1) * d];
            special::exp_slice(&shifted, dst);
            if let Some(mrow) = mrow {
                for j in 0..d {
                    if !mrow[j] {
                        dst[j] = 0.0;
                    }
                }
            }
            let sum: f64 = dst.iter().sum();
            let inv = 1.0 / sum;
            for v in dst.iter_mut() {
                *v *= inv;
            }
        }
        let out = self.seal(out);
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::new(out, &shape)?,
            Op::SoftmaxRows { a },
            needs,
            None,
        ))
    }

    /// Sum of all elements, yielding a scalar.
    pub fn sum(&mut self, a: TensorId) -> Result<TensorId> {
        let s: f64 = self.data(a).iter().sum();
        let s = self.seal(vec![s]);
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(s, &[1])?, Op::Sum { a }, needs, None))
    }

    /// Extract row `index` of a 2-d tensor as a 1-d vector.
    pub fn row(&mut self, a: TensorId, index: usize) -> Result<TensorId> {
        let sa = self.shape(a);
        if sa.len() != 2 {
            return Err(Error::Dimension(format!("row needs 2-d, got {sa:?}")));
        }
        let (m, n) = (sa[0], sa[1]);
        if index >= m {
            return Err(Error::Dimension(format!("row {index} out of {m}")));
        }
        let data = self.data(a)[index * n..(index + 1) * n].to_vec();
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(data, &[n])?, Op::Row { a, index }, needs, None))
    }

    /// Column slice [start, start+len) of a 2-d tensor.
    pub fn cols(&mut self, a: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let sa = self.shape(a);
        if sa.len() != 2 {
            return Err(Error::Dimension(format!("cols needs 2-d, got {sa:?}")));
        }
        let (m, n) = (sa[0], sa[1]);
        if start + len > n || len == 0 {
            return Err(Error::Dimension(format!(
                "cols [{start}, {}) out of {n}",
                start + len
            )));
        }
        let src = self.data(a);
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::new(data, &[m, len])?,
            Op::Cols { a, start, len },
            needs,
            None,
        ))
    }

    /// Horizontal concatenation of 2-d tensors with equal row counts.
    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat_cols: no parts".into()));
        }
        let m = self.shape(parts[0])[0];
        let mut widths = Vec::with_capacity(parts.len());
        let mut total = 0;
        for &p in parts {
            let sp = self.shape(p);
            if sp.len() != 2 || sp[0] != m {
                return Err(Error::Dimension(format!(
                    "concat_cols: incompatible part shape {sp:?}"
                )));
            }
            widths.push(sp[1]);
            total += sp[1];
        }
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(widths.iter()) {
                let src = self.data(p);
                data.extend_from_slice(&src[i * w..(i + 1) * w]);
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::new(data, &[m, total])?,
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
            needs,
            None,
        ))
    }

    /// Multi-head attention in one op: for each head, scores = scale·QhKhᵀ
    /// over head column slices, masked row softmax, context = probs·Vh
    /// written into the head's output columns. `key_mask` marks attendable
    /// key positions (shared by every query row).
    pub fn attention(
        &mut self,
        q: TensorId,
        k: TensorId,
        v: TensorId,
        heads: usize,
        scale: f64,
        key_mask: &[bool],
    ) -> Result<TensorId> {
        let rows = self.shape(q)[0];
        if key_mask.len() != rows {
            return Err(Error::Dimension(format!(
                "key mask of {} entries for {rows} positions",
                key_mask.len()
            )));
        }
        self.attention_impl(
            q,
            k,
            v,
            heads,
            scale,
            Arc::new(vec![(0, rows)]),
            Some(Arc::new(key_mask.to_vec())),
        )
    }

    /// Attention over a packed batch: each (offset, len) segment attends
    /// only within itself. Packed rows are all real, so no mask exists.
    pub fn attention_packed(
        &mut self,
        q: TensorId,
        k: TensorId,
        v: TensorId,
        heads: usize,
        scale: f64,
        segments: &[(usize, usize)],
    ) -> Result<TensorId> {
        self.attention_impl(q, k, v, heads, scale, Arc::new(segments.to_vec()), None)
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_impl(
        &mut self,
        q: TensorId,
        k: TensorId,
        v: TensorId,
        heads: usize,
        scale: f64,
        segments: Arc<Vec<(usize, usize)>>,
        key_mask: Option<Arc<Vec<bool>>>,
    ) -> Result<TensorId> {
        let shape = self.shape(q).to_vec();
        if shape.len() != 2 || self.shape(k) != shape || self.shape(v) != shape {
            return Err(Error::Dimension(format!(
                "attention needs equal 2-d q/k/v, got {:?}/{:?}/{:?}",
                shape,
                self.shape(k),
                self.shape(v)
            )));
        }
        let (rows, d) = (shape[0], shape[1]);
        if heads == 0 || d % heads != 0 {
            return Err(Error::Dimension(format!(
                "width {d} not divisible into {heads} heads"
            )));
        }
        let mut covered = 0;
        for &(off, len) in segments.iter() {
            if off != covered || len == 0 {
                return Err(Error::Contract(format!(
                    "attention segments must tile the rows; got offset {off} after {covered}"
                )));
            }
            covered += len;
        }
        if covered != rows {
            return Err(Error::Contract(format!(
                "attention segments cover {covered} of {rows} rows"
            )));
        }
        if let Some(m) = &key_mask {
            if m.len() != rows {
                return Err(Error::Dimension(format!(
                    "key mask of {} entries for {rows} positions",
                    m.len()
                )));
            }
        }
        let dh = d / heads;
        let qd = self.data(q);
        let kd = self.data(k);
        let vd = self.data(v);
        let mut out = vec![0.0; rows * d];
        let aux_len: usize = segments.iter().map(|&(_, t)| heads * t * t).sum();
        let mut probs = vec![0.0; aux_len];
        let mut aux_off = 0;
        let mut shifted: Vec<f64> = Vec::new();
        for &(off, t) in segments.iter() {
            let mrow = key_mask.as_ref().map(|m| &m[off..off + t]);
            if let Some(mrow) = mrow {
                if !mrow.iter().any(|&x| x) {
                    return Err(Error::Contract("attention: every key is masked".into()));
                }
            }
            shifted.resize(t, 0.0);
            for h in 0..heads {
                let col = h * dh;
                let p = &mut probs[aux_off + h * t * t..aux_off + (h + 1) * t * t];
                // scores = scale · Qh·Khᵀ
                kernels::gemm_strided(
                    scale,
                    &qd[off * d + col..],
                    d as isize,
                    1,
                    &kd[off * d + col..],
                    1,
                    d as isize,
                    0.0,
                    p,
                    t as isize,
                    1,
                    t,
                    dh,
                    t,
                );
                // masked row softmax in place
                for r in 0..t {
                    let row = &mut p[r * t..(r + 1) * t];
                    let mut mx = f64::NEG_INFINITY;
                    match mrow {
                        Some(mrow) => {
                            for j in 0..t {
                                if mrow[j] && row[j] > mx {
                                    mx = row[j];
                                }
                            }
                        }
                        None => {
                            for &x in row.iter() {
                                if x > mx {
                                    mx = x;
                                }
                            }
                        }
                    }
                    for j in 0..t {
                        shifted[j] = row[j] - mx;
                    }
                    special::exp_slice(&shifted[..t], row);
                    if let Some(mrow) = mrow {
                        for j in 0..t {
                            if !mrow[j] {
                                row[j] = 0.0;
                            }
                        }
                    }
                    let sum: f64 = row.iter().sum();
                    let inv = 1.0 / sum;
                    for x in row.iter_mut() {
                        *x *= inv;
                    }
                }
                // context = probs · Vh into the head's output columns
                kernels::gemm_strided(
                    1.0,
                    p,
                    t as isize,
                    1,
                    &vd[off * d + col..],
                    d as isize,
                    1,
                    0.0,
                    &mut out[off * d + col..],
                    d as isize,
                    1,
                    t,
                    t,
                    dh,
                );
            }
            aux_off += heads * t * t;
        }
        let out = self.seal(out);
        let probs = self.seal(probs);
        let needs = self.needs(q) || self.needs(k) || self.needs(v);
        Ok(self.push(
            Tensor::new(out, &shape)?,
            Op::Attention {
                q,
                k,
                v,
                heads,
                scale,
                segments,
            },
            needs,
            Some(probs),
        ))
    }
    // ── backward ─────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Every reachable grad-requiring leaf
    /// receives ∂loss/∂leaf; calling backward again without `zero_grad`
    /// accumulates additively.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.data(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let n = loss.0 + 1;
        let mut local: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
        local.resize_with(n, || None);
        local[loss.0] = Some(vec![1.0]);

        for i in (0..n).rev() {
            let Some(g) = local[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if self.nodes[i].requires_grad {
                let numel = self.nodes[i].value.numel();
                let slot = self.nodes[i].grad.get_or_insert_with(|| vec![0.0; numel]);
                for (dst, src) in slot.iter_mut().zip(g.iter()) {
                    *dst += src;
                }
            }
            self.propagate(i, g, &mut local);
        }
        Ok(())
    }

    fn ensure<'a>(
        local: &'a mut [Option<Vec<f64>>],
        id: TensorId,
        numel: usize,
    ) -> &'a mut Vec<f64> {
        local[id.0].get_or_insert_with(|| vec![0.0; numel])
    }

    /// Move a fully formed gradient into a slot, or add it into what is
    /// already there. Moving avoids the zero-fill + accumulate passes for
    /// the overwhelmingly common single-consumer case.
    fn donate(local: &mut [Option<Vec<f64>>], id: TensorId, g: Vec<f64>) {
        match &mut local[id.0] {
            None => local[id.0] = Some(g),
            Some(dst) => {
                for (x, y) in dst.iter_mut().zip(g.iter()) {
                    *x += y;
                }
            }
        }
    }

    /// Like [`Tape::donate`] for gradients produced elementwise from the
    /// upstream gradient.
    fn donate_map(
        local: &mut [Option<Vec<f64>>],
        id: TensorId,
        g: &[f64],
        f: impl Fn(usize, f64) -> f64,
    ) {
        match &mut local[id.0] {
            None => local[id.0] = Some(g.iter().enumerate().map(|(j, &x)| f(j, x)).collect()),
            Some(dst) => {
                for (j, (x, &y)) in dst.iter_mut().zip(g.iter()).enumerate() {
                    *x += f(j, y);
                }
            }
        }
    }

    fn propagate(&self, i: usize, mut g: Vec<f64>, local: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.needs(*a) {
                    let da = Self::ensure(local, *a, m * k);
                    kernels::gemm_nt_acc(&g, self.data(*b), da, m, n, k, 1.0);
                }
                if self.needs(*b) {
                    let db = Self::ensure(local, *b, k * n);
                    kernels::gemm_tn_acc(self.data(*a), &g, db, k, m, n, 1.0);
                }
            }
            Op::MatMulNT { a, b, alpha } => {
                // C[m,n] = alpha·A[m,k]·B[n,k]ᵀ
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[0];
                if self.needs(*a) {
                    // dA += alpha·G·B
                    let da = Self::ensure(local, *a, m * k);
                    kernels::gemm_nn_acc(&g, self.data(*b), da, m, n, k, *alpha);
                }
                if self.needs(*b) {
                    // dB += alpha·Gᵀ·A
                    let db = Self::ensure(local, *b, n * k);
                    kernels::gemm_tn_acc(&g, self.data(*a), db, n, m, k, *alpha);
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                scale,
                segments,
            } => {
                let d = node.value.shape()[1];
                let rows = node.value.shape()[0];
                let dh = d / heads;
                let probs = node.aux.as_ref().expect("attention aux");
                let needs_q = self.needs(*q);
                let needs_k = self.needs(*k);
                let needs_v = self.needs(*v);
                let mut dp: Vec<f64> = Vec::new();
                let mut ds: Vec<f64> = Vec::new();
                let mut aux_off = 0;
                for &(off, t) in segments.iter() {
                    dp.resize(t * t, 0.0);
                    ds.resize(t * t, 0.0);
                    for h in 0..*heads {
                        let col = h * dh;
                        let base = off * d + col;
                        let p = &probs[aux_off + h * t * t..aux_off + (h + 1) * t * t];
                        // dP = Gh·Vhᵀ
                        kernels::gemm_strided(
                            1.0,
                            &g[base..],
                            d as isize,
                            1,
                            &self.data(*v)[base..],
                            1,
                            d as isize,
                            0.0,
                            &mut dp,
                            t as isize,
                            1,
                            t,
                            dh,
                            t,
                        );
                        // softmax backward: dS = P ⊙ (dP − rowsum(dP ⊙ P))
                        for r in 0..t {
                            let pr = &p[r * t..(r + 1) * t];
                            let dpr = &dp[r * t..(r + 1) * t];
                            let mut dot = 0.0;
                            for j in 0..t {
                                dot += dpr[j] * pr[j];
                            }
                            let dsr = &mut ds[r * t..(r + 1) * t];
                            for j in 0..t {
                                dsr[j] = pr[j] * (dpr[j] - dot);
                            }
                        }
                        // gradients accumulate straight into the slots;
                        // beta = 1 keeps this correct even if q/k/v alias
                        if needs_q {
                            // dQh += scale·dS·Kh
                            let kd = self.data(*k);
                            let dq = Self::ensure(local, *q, rows * d);
                            kernels::gemm_strided(
                                *scale,
                                &ds,
                                t as isize,
                                1,
                                &kd[base..],
                                d as isize,
                                1,
                                1.0,
                                &mut dq[base..],
                                d as isize,
                                1,
                                t,
                                t,
                                dh,
                            );
                        }
                        if needs_k {
                            // dKh += scale·dSᵀ·Qh
                            let qd = self.data(*q);
                            let dk = Self::ensure(local, *k, rows * d);
                            kernels::gemm_strided(
                                *scale,
                                &ds,
                                1,
                                t as isize,
                                &qd[base..],
                                d as isize,
                                1,
                                1.0,
                                &mut dk[base..],
                                d as isize,
                                1,
                                t,
                                t,
                                dh,
                            );
                        }
                        if needs_v {
                            // dVh += Pᵀ·Gh
                            let dv = Self::ensure(local, *v, rows * d);
                            kernels::gemm_strided(
                                1.0,
                                p,
                                1,
                                t as isize,
                                &g[base..],
                                d as isize,
                                1,
                                1.0,
                                &mut dv[base..],
                                d as isize,
                                1,
                                t,
                                t,
                                dh,
                            );
                        }
                    }
                    aux_off += heads * t * t;
                }
            }
            Op::Linear { a, w, bias } => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*w)[1];
                if self.needs(*a) {
                    let da = Self::ensure(local, *a, m * k);
                    kernels::gemm_nt_acc(&g, self.data(*w), da, m, n, k, 1.0);
                }
                if self.needs(*w) {
                    let dw = Self::ensure(local, *w, k * n);
                    kernels::gemm_tn_acc(self.data(*a), &g, dw, k, m, n, 1.0);
                }
                if self.needs(*bias) {
                    let db = Self::ensure(local, *bias, n);
                    for grow in g.chunks_exact(n) {
                        for (x, y) in db.iter_mut().zip(grow.iter()) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                let (na, nb) = (self.needs(*a), self.needs(*b));
                if na && nb {
                    match &mut local[a.0] {
                        None => local[a.0] = Some(g.clone()),
                        Some(dst) => {
                            for (x, y) in dst.iter_mut().zip(g.iter()) {
                                *x += y;
                            }
                        }
                    }
                    Self::donate(local, *b, g);
                } else if na {
                    Self::donate(local, *a, g);
                } else if nb {
                    Self::donate(local, *b, g);
                }
            }
            Op::AddRow { a, bias } => {
                if self.needs(*bias) {
                    let n = self.node(*bias).value.numel();
                    let db = Self::ensure(local, *bias, n);
                    for grow in g.chunks_exact(n) {
                        for (x, y) in db.iter_mut().zip(grow.iter()) {
                            *x += y;
                        }
                    }
                }
                if self.needs(*a) {
                    Self::donate(local, *a, g);
                }
            }
            Op::Mul { a, b } => {
                if self.needs(*a) {
                    let bv = self.data(*b);
                    Self::donate_map(local, *a, &g, |j, x| x * bv[j]);
                }
                if self.needs(*b) {
                    let av = self.data(*a);
                    for (x, y) in g.iter_mut().zip(av.iter()) {
                        *x *= y;
                    }
                    Self::donate(local, *b, g);
                }
            }
            Op::Div { a, b } => {
                let bv = self.data(*b);
                if self.needs(*a) {
                    Self::donate_map(local, *a, &g, |j, x| x / bv[j]);
                }
                if self.needs(*b) {
                    let av = self.data(*a);
                    for (j, x) in g.iter_mut().enumerate() {
                        *x = -*x * av[j] / (bv[j] * bv[j]);
                    }
                    Self::donate(local, *b, g);
                }
            }
            Op::Scale { a, c } => {
                if self.needs(*a) {
                    for x in g.iter_mut() {
                        *x *= c;
                    }
                    Self::donate(local, *a, g);
                }
            }
            Op::AddConst { a } => {
                if self.needs(*a) {
                    Self::donate(local, *a, g);
                }
            }
            Op::Transpose { a } => {
                if self.needs(*a) {
                    let (n, m) = (node.value.shape()[0], node.value.shape()[1]);
                    let da = Self::ensure(local, *a, m * n);
                    for i2 in 0..n {
                        for j2 in 0..m {
                            da[j2 * n + i2] += g[i2 * m + j2];
                        }
                    }
                }
            }
            Op::Gelu { a } => {
                if self.needs(*a) {
                    let xs = self.data(*a);
                    let cdf = node.aux.as_ref().expect("gelu aux");
                    special::gelu_grad_inplace(xs, cdf, &mut g);
                    Self::donate(local, *a, g);
                }
            }
            Op::Sqrt { a } => {
                if self.needs(*a) {
                    let out = node.value.data();
                    for (j, x) in g.iter_mut().enumerate() {
                        *x /= 2.0 * out[j];
                    }
                    Self::donate(local, *a, g);
                }
            }
            Op::LayerNorm { a, gamma, beta } => {
                let d = *node.value.shape().last().unwrap();
                let rows = node.value.numel() / d;
                let aux = node.aux.as_ref().expect("ln aux");
                let (mean, inv_std) = aux.split_at(rows);
                let xs = self.data(*a);
                let gv = gamma.map(|t| self.data(t).to_vec());

                if let Some(gid) = gamma {
                    if self.needs(*gid) {
                        let dg = Self::ensure(local, *gid, d);
                        for r in 0..rows {
                            let x = &xs[r * d..(r + 1) * d];
                            let gr = &g[r * d..(r + 1) * d];
                            let (mu, is) = (mean[r], inv_std[r]);
                            for j in 0..d {
                                dg[j] += gr[j] * (x[j] - mu) * is;
                            }
                        }
                    }
                }
                if let Some(bid) = beta {
                    if self.needs(*bid) {
                        let db = Self::ensure(local, *bid, d);
                        for gr in g.chunks_exact(d) {
                            for (x, y) in db.iter_mut().zip(gr.iter()) {
                                *x += y;
                            }
                        }
                    }
                }
                if self.needs(*a) {
                    // rewrite g in place row by row, then donate it
                    for r in 0..rows {
                        let x = &xs[r * d..(r + 1) * d];
                        let gr = &mut g[r * d..(r + 1) * d];
                        let (mu, is) = (mean[r], inv_std[r]);
                        let mut sum_dxh = 0.0;
                        let mut sum_dxh_xh = 0.0;
                        for j in 0..d {
                            let xh = (x[j] - mu) * is;
                            let dxh = match &gv {
                                Some(gv) => gr[j] * gv[j],
                                None => gr[j],
                            };
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xh;
                        }
                        let df = d as f64;
                        for j in 0..d {
                            let xh = (x[j] - mu) * is;
                            let dxh = match &gv {
                                Some(gv) => gr[j] * gv[j],
                                None => gr[j],
                            };
                            gr[j] = is / df * (df * dxh - sum_dxh - xh * sum_dxh_xh);
                        }
                    }
                    Self::donate(local, *a, g);
                }
            }
            Op::SoftmaxRows { a } => {
                if self.needs(*a) {
                    let d = *node.value.shape().last().unwrap();
                    let s = node.value.data();
                    for r in 0..g.len() / d {
                        let srow = &s[r * d..(r + 1) * d];
                        let grow = &mut g[r * d..(r + 1) * d];
                        let mut dot = 0.0;
                        for j in 0..d {
                            dot += grow[j] * srow[j];
                        }
                        for j in 0..d {
                            grow[j] = srow[j] * (grow[j] - dot);
                        }
                    }
                    Self::donate(local, *a, g);
                }
            }
            Op::Sum { a } => {
                if self.needs(*a) {
                    let numel = self.node(*a).value.numel();
                    let gv = g[0];
                    match &mut local[a.0] {
                        None => local[a.0] = Some(vec![gv; numel]),
                        Some(da) => {
                            for x in da.iter_mut() {
                                *x += gv;
                            }
                        }
                    }
                }
            }
            Op::Row { a, index } => {
                if self.needs(*a) {
                    let n = node.value.numel();
                    let numel = self.node(*a).value.numel();
                    let da = Self::ensure(local, *a, numel);
                    for j in 0..n {
                        da[index * n + j] += g[j];
                    }
                }
            }
            Op::Cols { a, start, len } => {
                if self.needs(*a) {
                    let n = self.shape(*a)[1];
                    let m = self.shape(*a)[0];
                    let da = Self::ensure(local, *a, m * n);
                    for i2 in 0..m {
                        for j2 in 0..*len {
                            da[i2 * n + start + j2] += g[i2 * len + j2];
                        }
                    }
                }
            }
            Op::ConcatCols { parts } => {
                let total = node.value.shape()[1];
                let m = node.value.shape()[0];
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if self.needs(p) {
                        let dp = Self::ensure(local, p, m * w);
                        for i2 in 0..m {
                            for j2 in 0..w {
                                dp[i2 * w + j2] += g[i2 * total + offset + j2];
                            }
                        }
                    }
                    offset += w;
                }
            }
        }
    }
}
