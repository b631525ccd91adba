//! Reverse-mode differentiation over dense tensors.
//!
//! Every primitive pushes a node onto a [`Tape`]; [`Tape::backward`] walks
//! the nodes in exact reverse order and accumulates gradients (summing over
//! multiple uses of a value). Only nodes reachable from a leaf created with
//! [`Tape::param`] carry gradients.

use std::sync::Arc;

use super::linalg::gemm;
use super::tensor::{axis_split, broadcast_shape, for_each_broadcast, reduce_to_shape};
use super::{NumericError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Contiguous row ranges of a stacked node matrix, one per graph (or per
/// any other grouping of rows).
#[derive(Debug, Clone, PartialEq)]
pub struct Segments {
    ranges: Vec<(usize, usize)>,
    total: usize,
}

impl Segments {
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Self {
        let mut ranges = Vec::new();
        let mut offset = 0;
        for len in lengths {
            ranges.push((offset, len));
            offset += len;
        }
        Self {
            ranges,
            total: offset,
        }
    }

    /// A single segment spanning `n` rows.
    pub fn single(n: usize) -> Self {
        Self::from_lengths([n])
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn total_rows(&self) -> usize {
        self.total
    }

    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }
}

/// Block-diagonal propagation matrix: one dense `n×n` block per graph.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonal {
    segments: Segments,
    blocks: Vec<Vec<f64>>,
}

impl BlockDiagonal {
    pub fn new(blocks: Vec<(usize, Vec<f64>)>) -> Result<Self, NumericError> {
        for (n, b) in &blocks {
            if b.len() != n * n {
                return Err(NumericError::BadLength {
                    shape: vec![*n, *n],
                    len: b.len(),
                });
            }
        }
        let segments = Segments::from_lengths(blocks.iter().map(|(n, _)| *n));
        Ok(Self {
            segments,
            blocks: blocks.into_iter().map(|(_, b)| b).collect(),
        })
    }

    pub fn segments(&self) -> &Segments {
        &self.segments
    }
}

enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    BatchMatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Clamp {
        a: Var,
        lo: f64,
        hi: f64,
    },
    Softmax {
        a: Var,
        axis: usize,
    },
    Sum {
        a: Var,
        axis: usize,
    },
    Mean {
        a: Var,
        axis: usize,
    },
    Max {
        a: Var,
        argmax: Vec<usize>,
    },
    SumAll(Var),
    L2Normalize {
        a: Var,
        axis: usize,
        norms: Vec<f64>,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        a: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    GatherRows {
        a: Var,
        index: Vec<usize>,
    },
    Propagate {
        h: Var,
        adj: Arc<BlockDiagonal>,
    },
    SegmentNorm {
        h: Var,
        gamma: Var,
        beta: Var,
        segments: Arc<Segments>,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    SegmentMean {
        h: Var,
        segments: Arc<Segments>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Lower bound on the norm used by [`Tape::l2_normalize`].
pub const L2_GUARD: f64 = 1e-12;

/// Ordered record of primitive operations and their values.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> NumericError {
    NumericError::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a value that gradients are not tracked for.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a trainable leaf; its gradient is available after
    /// [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// `op(a) · op(b)` for 2-D operands; `ta`/`tb` transpose the operand.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var, NumericError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 {
            return Err(mismatch("matmul", sa, sb));
        }
        let (m, ka) = if ta { (sa[1], sa[0]) } else { (sa[0], sa[1]) };
        let (kb, n) = if tb { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if ka != kb {
            return Err(mismatch("matmul", sa, sb));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            ka,
            n,
            self.value(a).values(),
            ta,
            self.value(b).values(),
            tb,
            &mut out,
            false,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            Op::MatMul { a, b, ta, tb },
            rg,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.matmul_t(a, b, false, false)
    }

    /// Batched matmul over the leading axis of two 3-D operands.
    pub fn batch_matmul_t(
        &mut self,
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
    ) -> Result<Var, NumericError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(mismatch("batch_matmul", sa, sb));
        }
        let batch = sa[0];
        let (m, ka) = if ta { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
        let (kb, n) = if tb { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if ka != kb {
            return Err(mismatch("batch_matmul", sa, sb));
        }
        let (la, lb) = (m * ka, ka * n);
        let mut out = vec![0.0; batch * m * n];
        let (av, bv) = (self.value(a).values(), self.value(b).values());
        for i in 0..batch {
            gemm(
                m,
                ka,
                n,
                &av[i * la..(i + 1) * la],
                ta,
                &bv[i * lb..(i + 1) * lb],
                tb,
                &mut out[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::new(vec![batch, m, n], out)?,
            Op::BatchMatMul { a, b, ta, tb },
            rg,
        ))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Tensor, bool), NumericError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let out_shape = broadcast_shape(sa, sb).ok_or_else(|| mismatch(name, sa, sb))?;
        let n: usize = out_shape.iter().product();
        let mut out = vec![0.0; n];
        let (av, bv) = (self.value(a).values(), self.value(b).values());
        for_each_broadcast(sa, sb, &out_shape, |o, i, j| out[o] = f(av[i], bv[j]));
        Ok((Tensor::new(out_shape, out)?, self.rg(a) || self.rg(b)))
    }

    /// Elementwise sum with broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (t, rg) = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (t, rg) = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    /// Elementwise product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (t, rg) = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|v| v * s);
        let rg = self.rg(a);
        self.push(t, Op::Scale(a, s), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|v| v.max(0.0));
        let rg = self.rg(a);
        self.push(t, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        });
        let rg = self.rg(a);
        self.push(t, Op::Sigmoid(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(t, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::ln);
        let rg = self.rg(a);
        self.push(t, Op::Log(a), rg)
    }

    /// Clamps into `[lo, hi]`; gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let t = self.value(a).map(|v| v.clamp(lo, hi));
        let rg = self.rg(a);
        self.push(t, Op::Clamp { a, lo, hi }, rg)
    }

    fn check_axis(&self, name: &'static str, a: Var, axis: usize) -> Result<(), NumericError> {
        if axis >= self.shape(a).len() {
            return Err(NumericError::BadAxis {
                op: name,
                axis,
                shape: self.shape(a).to_vec(),
            });
        }
        Ok(())
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, NumericError> {
        self.check_axis("softmax", a, axis)?;
        let x = self.value(a);
        let (outer, len, inner) = axis_split(x.shape(), axis);
        let xv = x.values();
        let mut out = vec![0.0; xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let mx = (0..len)
                    .map(|j| xv[at(j)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for j in 0..len {
                    let e = (xv[at(j)] - mx).exp();
                    out[at(j)] = e;
                    s += e;
                }
                for j in 0..len {
                    out[at(j)] /= s;
                }
            }
        }
        let t = Tensor::new(x.shape().to_vec(), out)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Softmax { a, axis }, rg))
    }

    fn reduce(
        &mut self,
        name: &'static str,
        a: Var,
        axis: usize,
    ) -> Result<(Vec<usize>, usize, usize, usize), NumericError> {
        self.check_axis(name, a, axis)?;
        let shape = self.shape(a).to_vec();
        let (outer, len, inner) = axis_split(&shape, axis);
        let mut out_shape = shape;
        out_shape.remove(axis);
        Ok((out_shape, outer, len, inner))
    }

    /// Sum over `axis`, removing it.
    pub fn sum(&mut self, a: Var, axis: usize) -> Result<Var, NumericError> {
        let (shape, outer, len, inner) = self.reduce("sum", a, axis)?;
        let xv = self.value(a).values();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let src = &xv[(o * len + j) * inner..(o * len + j + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(shape, out)?, Op::Sum { a, axis }, rg))
    }

    /// Mean over `axis`, removing it. An empty axis yields zeros.
    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var, NumericError> {
        let (shape, outer, len, inner) = self.reduce("mean", a, axis)?;
        let xv = self.value(a).values();
        let mut out = vec![0.0; outer * inner];
        if len > 0 {
            for o in 0..outer {
                for j in 0..len {
                    let src = &xv[(o * len + j) * inner..(o * len + j + 1) * inner];
                    for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            let inv = 1.0 / len as f64;
            out.iter_mut().for_each(|v| *v *= inv);
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(shape, out)?, Op::Mean { a, axis }, rg))
    }

    /// Max over `axis`, removing it. Gradient flows to the first maximal
    /// element.
    pub fn max(&mut self, a: Var, axis: usize) -> Result<Var, NumericError> {
        let (shape, outer, len, inner) = self.reduce("max", a, axis)?;
        if len == 0 {
            return Err(NumericError::EmptyReduction { op: "max" });
        }
        let xv = self.value(a).values();
        let mut out = vec![f64::NEG_INFINITY; outer * inner];
        let mut argmax = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let slot = o * inner + i;
                for j in 0..len {
                    let idx = (o * len + j) * inner + i;
                    if xv[idx] > out[slot] || j == 0 {
                        out[slot] = xv[idx];
                        argmax[slot] = idx;
                    }
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(shape, out)?, Op::Max { a, argmax }, rg))
    }

    /// Sum of every element, as a scalar.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).values().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), rg)
    }

    /// Mean of every element, as a scalar.
    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// `x / max(‖x‖₂, 1e-12)` along `axis`. The guard is treated as a
    /// constant by the gradient.
    pub fn l2_normalize(&mut self, a: Var, axis: usize) -> Result<Var, NumericError> {
        self.check_axis("l2_normalize", a, axis)?;
        let x = self.value(a);
        let (outer, len, inner) = axis_split(x.shape(), axis);
        let xv = x.values();
        let mut out = vec![0.0; xv.len()];
        let mut norms = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * len + j) * inner + i;
                let nrm = (0..len).map(|j| xv[at(j)] * xv[at(j)]).sum::<f64>().sqrt();
                norms[o * inner + i] = nrm;
                let d = nrm.max(L2_GUARD);
                for j in 0..len {
                    out[at(j)] = xv[at(j)] / d;
                }
            }
        }
        let t = Tensor::new(x.shape().to_vec(), out)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::L2Normalize { a, axis, norms }, rg))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, NumericError> {
        let first = *parts
            .first()
            .ok_or(NumericError::EmptyReduction { op: "concat" })?;
        self.check_axis("concat", first, axis)?;
        let base = self.shape(first).to_vec();
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(mismatch("concat", &base, s));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let pv = self.value(p).values();
                let chunk = self.shape(p)[axis] * inner;
                out.extend_from_slice(&pv[o * chunk..(o + 1) * chunk]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(
        &mut self,
        a: Var,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<Var, NumericError> {
        self.check_axis("slice", a, axis)?;
        let shape = self.shape(a).to_vec();
        if start + len > shape[axis] {
            return Err(NumericError::BadSlice { start, len, shape });
        }
        let (outer, full, inner) = axis_split(&shape, axis);
        let xv = self.value(a).values();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = (o * full + start) * inner;
            out.extend_from_slice(&xv[from..from + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            Op::Slice { a, axis, start },
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NumericError> {
        let t = self.value(a).clone().reshaped(shape.to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    /// Selects rows (along axis 0) of a 2-D value; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var, NumericError> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 2 {
            return Err(mismatch("gather_rows", &shape, &[index.len()]));
        }
        let cols = shape[1];
        let xv = self.value(a).values();
        let mut out = Vec::with_capacity(index.len() * cols);
        for &r in index {
            if r >= shape[0] {
                return Err(NumericError::BadSlice {
                    start: r,
                    len: 1,
                    shape,
                });
            }
            out.extend_from_slice(&xv[r * cols..(r + 1) * cols]);
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(vec![index.len(), cols], out)?,
            Op::GatherRows {
                a,
                index: index.to_vec(),
            },
            rg,
        ))
    }

    /// Multiplies each graph's rows of `h` by that graph's propagation block.
    pub fn propagate(&mut self, adj: &Arc<BlockDiagonal>, h: Var) -> Result<Var, NumericError> {
        let shape = self.shape(h).to_vec();
        if shape.len() != 2 || shape[0] != adj.segments.total_rows() {
            return Err(mismatch("propagate", &[adj.segments.total_rows()], &shape));
        }
        let d = shape[1];
        let hv = self.value(h).values();
        let mut out = vec![0.0; hv.len()];
        for (&(off, n), block) in adj.segments.ranges().iter().zip(&adj.blocks) {
            gemm(
                n,
                n,
                d,
                block,
                false,
                &hv[off * d..(off + n) * d],
                false,
                &mut out[off * d..(off + n) * d],
                false,
            );
        }
        let rg = self.rg(h);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Propagate {
                h,
                adj: Arc::clone(adj),
            },
            rg,
        ))
    }

    /// Per-segment, per-channel standardization of `h` (rows × channels)
    /// using batch statistics, followed by `gamma * x̂ + beta`. Returns the
    /// output and the per-segment biased means and variances.
    pub fn segment_norm(
        &mut self,
        h: Var,
        gamma: Var,
        beta: Var,
        segments: &Arc<Segments>,
        eps: f64,
    ) -> Result<(Var, Vec<Vec<f64>>, Vec<Vec<f64>>), NumericError> {
        let shape = self.shape(h).to_vec();
        if shape.len() != 2 || shape[0] != segments.total_rows() {
            return Err(mismatch("segment_norm", &[segments.total_rows()], &shape));
        }
        let d = shape[1];
        if self.value(gamma).len() != d || self.value(beta).len() != d {
            return Err(mismatch("segment_norm", &shape, self.shape(gamma)));
        }
        let hv = self.value(h).values();
        let gv = self.value(gamma).values();
        let bv = self.value(beta).values();
        let mut xhat = vec![0.0; hv.len()];
        let mut out = vec![0.0; hv.len()];
        let mut inv_std = vec![0.0; segments.len() * d];
        let mut means = Vec::with_capacity(segments.len());
        let mut vars = Vec::with_capacity(segments.len());
        for (s, &(off, n)) in segments.ranges().iter().enumerate() {
            let mut mean = vec![0.0; d];
            let mut var = vec![0.0; d];
            if n > 0 {
                for r in off..off + n {
                    for c in 0..d {
                        mean[c] += hv[r * d + c];
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                for r in off..off + n {
                    for c in 0..d {
                        let z = hv[r * d + c] - mean[c];
                        var[c] += z * z;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
            }
            let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
            inv_std[s * d..(s + 1) * d].copy_from_slice(&inv);
            for r in off..off + n {
                let row = r * d..(r + 1) * d;
                for ((((x, o), &h), &m), (&i, (&g, &b))) in xhat[row.clone()]
                    .iter_mut()
                    .zip(&mut out[row.clone()])
                    .zip(&hv[row])
                    .zip(&mean)
                    .zip(inv.iter().zip(gv.iter().zip(bv)))
                {
                    let z = (h - m) * i;
                    *x = z;
                    *o = g * z + b;
                }
            }
            means.push(mean);
            vars.push(var);
        }
        let rg = self.rg(h) || self.rg(gamma) || self.rg(beta);
        let v = self.push(
            Tensor::new(shape, out)?,
            Op::SegmentNorm {
                h,
                gamma,
                beta,
                segments: Arc::clone(segments),
                xhat,
                inv_std,
            },
            rg,
        );
        Ok((v, means, vars))
    }

    /// Mean of the rows of each segment; an empty segment gives a zero row.
    pub fn segment_mean(&mut self, h: Var, segments: &Arc<Segments>) -> Result<Var, NumericError> {
        let shape = self.shape(h).to_vec();
        if shape.len() != 2 || shape[0] != segments.total_rows() {
            return Err(mismatch("segment_mean", &[segments.total_rows()], &shape));
        }
        let d = shape[1];
        let hv = self.value(h).values();
        let mut out = vec![0.0; segments.len() * d];
        for (s, &(off, n)) in segments.ranges().iter().enumerate() {
            if n == 0 {
                continue;
            }
            let row = &mut out[s * d..(s + 1) * d];
            for r in off..off + n {
                for (o, x) in row.iter_mut().zip(&hv[r * d..(r + 1) * d]) {
                    *o += x;
                }
            }
            row.iter_mut().for_each(|v| *v /= n as f64);
        }
        let rg = self.rg(h);
        Ok(self.push(
            Tensor::new(vec![segments.len(), d], out)?,
            Op::SegmentMean {
                h,
                segments: Arc::clone(segments),
            },
            rg,
        ))
    }

    /// Populates gradients of every trainable leaf with respect to the
    /// scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumericError> {
        if self.value(loss).len() != 1 {
            return Err(NumericError::NotScalar {
                shape: self.shape(loss).to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.backward_node(i, &g, &mut grads);
        }
        self.grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.and_then(|v| Tensor::new(self.nodes[i].value.shape().to_vec(), v).ok()))
            .collect();
        Ok(())
    }

    fn backward_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.values();
        let out_shape = node.value.shape();
        let mut acc = |v: Var, delta: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, d) in existing.iter_mut().zip(delta) {
                        *e += d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.values();
        let shp = |v: Var| self.nodes[v.0].value.shape();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, ta, tb } => {
                let (m, n) = (out_shape[0], out_shape[1]);
                let sa = shp(a);
                let k = if ta { sa[0] } else { sa[1] };
                if self.rg(a) {
                    let mut da = vec![0.0; m * k];
                    if ta {
                        // dA (k×m) = op(B) · dCᵀ
                        gemm(k, n, m, val(b), tb, g, true, &mut da, false);
                    } else {
                        // dA (m×k) = dC · op(B)ᵀ
                        gemm(m, n, k, g, false, val(b), !tb, &mut da, false);
                    }
                    acc(a, da);
                }
                if self.rg(b) {
                    let mut db = vec![0.0; k * n];
                    if tb {
                        // dB (n×k) = dCᵀ · op(A)
                        gemm(n, m, k, g, true, val(a), ta, &mut db, false);
                    } else {
                        // dB (k×n) = op(A)ᵀ · dC
                        gemm(k, m, n, val(a), !ta, g, false, &mut db, false);
                    }
                    acc(b, db);
                }
            }
            &Op::BatchMatMul { a, b, ta, tb } => {
                let (batch, m, n) = (out_shape[0], out_shape[1], out_shape[2]);
                let sa = shp(a);
                let k = if ta { sa[1] } else { sa[2] };
                let (la, lb, lc) = (m * k, k * n, m * n);
                if self.rg(a) {
                    let mut da = vec![0.0; batch * la];
                    let bv = val(b);
                    for t in 0..batch {
                        let gc = &g[t * lc..(t + 1) * lc];
                        let bb = &bv[t * lb..(t + 1) * lb];
                        let dst = &mut da[t * la..(t + 1) * la];
                        if ta {
                            gemm(k, n, m, bb, tb, gc, true, dst, false);
                        } else {
                            gemm(m, n, k, gc, false, bb, !tb, dst, false);
                        }
                    }
                    acc(a, da);
                }
                if self.rg(b) {
                    let mut db = vec![0.0; batch * lb];
                    let av = val(a);
                    for t in 0..batch {
                        let gc = &g[t * lc..(t + 1) * lc];
                        let aa = &av[t * la..(t + 1) * la];
                        let dst = &mut db[t * lb..(t + 1) * lb];
                        if tb {
                            gemm(n, m, k, gc, true, aa, ta, dst, false);
                        } else {
                            gemm(k, m, n, aa, !ta, gc, false, dst, false);
                        }
                    }
                    acc(b, db);
                }
            }
            &Op::Add(a, b) => {
                if self.rg(a) {
                    acc(a, reduce_to_shape(g, out_shape, shp(a)));
                }
                if self.rg(b) {
                    acc(b, reduce_to_shape(g, out_shape, shp(b)));
                }
            }
            &Op::Sub(a, b) => {
                if self.rg(a) {
                    acc(a, reduce_to_shape(g, out_shape, shp(a)));
                }
                if self.rg(b) {
                    let mut d = reduce_to_shape(g, out_shape, shp(b));
                    d.iter_mut().for_each(|v| *v = -*v);
                    acc(b, d);
                }
            }
            &Op::Mul(a, b) => {
                let (sa, sb) = (shp(a), shp(b));
                let (av, bv) = (val(a), val(b));
                if self.rg(a) {
                    let mut d = vec![0.0; av.len()];
                    for_each_broadcast(sa, sb, out_shape, |o, ia, ib| d[ia] += g[o] * bv[ib]);
                    acc(a, d);
                }
                if self.rg(b) {
                    let mut d = vec![0.0; bv.len()];
                    for_each_broadcast(sa, sb, out_shape, |o, ia, ib| d[ib] += g[o] * av[ia]);
                    acc(b, d);
                }
            }
            &Op::Scale(a, s) => acc(a, g.iter().map(|v| v * s).collect()),
            &Op::Relu(a) => acc(
                a,
                g.iter()
                    .zip(out)
                    .map(|(d, &y)| if y > 0.0 { *d } else { 0.0 })
                    .collect(),
            ),
            &Op::Sigmoid(a) => acc(
                a,
                g.iter().zip(out).map(|(d, y)| d * y * (1.0 - y)).collect(),
            ),
            &Op::Exp(a) => acc(a, g.iter().zip(out).map(|(d, y)| d * y).collect()),
            &Op::Log(a) => acc(a, g.iter().zip(val(a)).map(|(d, x)| d / x).collect()),
            &Op::Clamp { a, lo, hi } => acc(
                a,
                g.iter()
                    .zip(val(a))
                    .map(|(d, &x)| if (lo..=hi).contains(&x) { *d } else { 0.0 })
                    .collect(),
            ),
            &Op::Softmax { a, axis } => {
                let (outer, len, inner) = axis_split(out_shape, axis);
                let mut d = vec![0.0; out.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * len + j) * inner + i;
                        let dot: f64 = (0..len).map(|j| g[at(j)] * out[at(j)]).sum();
                        for j in 0..len {
                            d[at(j)] = out[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
                acc(a, d);
            }
            &Op::Sum { a, axis } | &Op::Mean { a, axis } => {
                let (outer, len, inner) = axis_split(shp(a), axis);
                let s = if matches!(node.op, Op::Mean { .. }) && len > 0 {
                    1.0 / len as f64
                } else {
                    1.0
                };
                let mut d = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for j in 0..len {
                        for i in 0..inner {
                            d[(o * len + j) * inner + i] = g[o * inner + i] * s;
                        }
                    }
                }
                acc(a, d);
            }
            Op::Max { a, argmax, .. } => {
                let mut d = vec![0.0; val(*a).len()];
                for (slot, &idx) in argmax.iter().enumerate() {
                    d[idx] += g[slot];
                }
                acc(*a, d);
            }
            &Op::SumAll(a) => acc(a, vec![g[0]; val(a).len()]),
            Op::L2Normalize { a, axis, norms } => {
                let (outer, len, inner) = axis_split(out_shape, *axis);
                let mut d = vec![0.0; out.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * len + j) * inner + i;
                        let nrm = norms[o * inner + i];
                        if nrm > L2_GUARD {
                            let dot: f64 = (0..len).map(|j| g[at(j)] * out[at(j)]).sum();
                            for j in 0..len {
                                d[at(j)] = (g[at(j)] - out[at(j)] * dot) / nrm;
                            }
                        } else {
                            for j in 0..len {
                                d[at(j)] = g[at(j)] / L2_GUARD;
                            }
                        }
                    }
                }
                acc(*a, d);
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = axis_split(out_shape, *axis);
                let mut offset = 0;
                for &p in parts {
                    let plen = shp(p)[*axis];
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(outer * plen * inner);
                        for o in 0..outer {
                            let from = (o * total + offset) * inner;
                            d.extend_from_slice(&g[from..from + plen * inner]);
                        }
                        acc(p, d);
                    }
                    offset += plen;
                }
            }
            &Op::Slice { a, axis, start } => {
                let (outer, full, inner) = axis_split(shp(a), axis);
                let len = out_shape[axis];
                let mut d = vec![0.0; outer * full * inner];
                for o in 0..outer {
                    let to = (o * full + start) * inner;
                    d[to..to + len * inner]
                        .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                acc(a, d);
            }
            &Op::Reshape(a) => acc(a, g.to_vec()),
            Op::GatherRows { a, index } => {
                let cols = out_shape[1];
                let mut d = vec![0.0; val(*a).len()];
                for (k, &r) in index.iter().enumerate() {
                    for c in 0..cols {
                        d[r * cols + c] += g[k * cols + c];
                    }
                }
                acc(*a, d);
            }
            Op::Propagate { h, adj } => {
                let d = out_shape[1];
                let mut dh = vec![0.0; out.len()];
                for (&(off, n), block) in adj.segments.ranges().iter().zip(&adj.blocks) {
                    gemm(
                        n,
                        n,
                        d,
                        block,
                        true,
                        &g[off * d..(off + n) * d],
                        false,
                        &mut dh[off * d..(off + n) * d],
                        false,
                    );
                }
                acc(*h, dh);
            }
            Op::SegmentNorm {
                h,
                gamma,
                beta,
                segments,
                xhat,
                inv_std,
            } => {
                let d = out_shape[1];
                let gv = val(*gamma);
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                let mut dh = vec![0.0; out.len()];
                for (s, &(off, n)) in segments.ranges().iter().enumerate() {
                    if n == 0 {
                        continue;
                    }
                    let mut sum_g = vec![0.0; d];
                    let mut sum_gx = vec![0.0; d];
                    for r in off..off + n {
                        for c in 0..d {
                            sum_g[c] += g[r * d + c];
                            sum_gx[c] += g[r * d + c] * xhat[r * d + c];
                        }
                    }
                    let k: Vec<f64> = (0..d)
                        .map(|c| gv[c] * inv_std[s * d + c] / n as f64)
                        .collect();
                    let nf = n as f64;
                    for r in off..off + n {
                        for c in 0..d {
                            dh[r * d + c] =
                                k[c] * (nf * g[r * d + c] - sum_g[c] - xhat[r * d + c] * sum_gx[c]);
                        }
                    }
                    for c in 0..d {
                        dbeta[c] += sum_g[c];
                        dgamma[c] += sum_gx[c];
                    }
                }
                acc(*h, dh);
                acc(*gamma, dgamma);
                acc(*beta, dbeta);
            }
            Op::SegmentMean { h, segments } => {
                let d = out_shape[1];
                let mut dh = vec![0.0; val(*h).len()];
                for (s, &(off, n)) in segments.ranges().iter().enumerate() {
                    for r in off..off + n {
                        for c in 0..d {
                            dh[r * d + c] = g[s * d + c] / n as f64;
                        }
                    }
                }
                acc(*h, dh);
            }
        }
    }
}
