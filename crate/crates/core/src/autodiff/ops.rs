//! Forward rules of the differentiable operations.

use super::gemm::gemm;
use super::graph::{permute_source_index, BatchMode, Op};
use super::{Graph, Tensor, TensorError, Var};

/// Additive mask value for blocked attention positions.
///
/// Finite so that masked rows never produce `inf - inf`; after the row-max
/// shift its exponential underflows to exactly zero.
pub const MASK_SENTINEL: f64 = -1e9;

/// Variance floor of [`Graph::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn check_axis(op: &'static str, axis: usize, ndim: usize) -> Result<(), TensorError> {
    if axis >= ndim {
        return Err(TensorError::AxisOutOfRange { op, axis, ndim });
    }
    Ok(())
}

impl Graph {
    /// Matrix product over the last two axes.
    ///
    /// Leading (batch) axes must be identical, or one operand must be a plain
    /// matrix that is shared across the other's batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch("matmul", &sa, &sb));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(mismatch("matmul", &sa, &sb));
        }
        let batch_a = &sa[..sa.len() - 2];
        let batch_b = &sb[..sb.len() - 2];
        let (mode, batch_shape) = if batch_a == batch_b {
            (BatchMode::Both, batch_a)
        } else if batch_b.is_empty() {
            (BatchMode::SharedRhs, batch_a)
        } else if batch_a.is_empty() {
            (BatchMode::SharedLhs, batch_b)
        } else {
            return Err(mismatch("matmul", &sa, &sb));
        };
        let batch: usize = batch_shape.iter().product();
        let mut out_shape = batch_shape.to_vec();
        out_shape.extend([m, n]);

        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; batch * m * n];
        match mode {
            BatchMode::SharedRhs => gemm(batch * m, k, n, av, false, bv, false, &mut out, 0.0),
            BatchMode::Both => {
                for t in 0..batch {
                    gemm(
                        m,
                        k,
                        n,
                        &av[t * m * k..(t + 1) * m * k],
                        false,
                        &bv[t * k * n..(t + 1) * k * n],
                        false,
                        &mut out[t * m * n..(t + 1) * m * n],
                        0.0,
                    );
                }
            }
            BatchMode::SharedLhs => {
                for t in 0..batch {
                    gemm(
                        m,
                        k,
                        n,
                        av,
                        false,
                        &bv[t * k * n..(t + 1) * k * n],
                        false,
                        &mut out[t * m * n..(t + 1) * m * n],
                        0.0,
                    );
                }
            }
        }
        let value = Tensor::new(out_shape, out)?;
        let op = Op::MatMul {
            a,
            b,
            mode,
            batch,
            m,
            k,
            n,
        };
        self.push("matmul", value, op, &[a, b])
    }

    /// Elementwise sum; `b` may have a shape equal to a suffix of `a`'s and is
    /// then broadcast over the leading axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(mismatch("add", sa, sb));
        }
        let bv = self.value(b).data();
        let blen = bv.len();
        let mut out = self.value(a).clone();
        for chunk in out.data_mut().chunks_exact_mut(blen) {
            for (o, x) in chunk.iter_mut().zip(bv) {
                *o += x;
            }
        }
        self.push("add", out, Op::Add { a, b }, &[a, b])
    }

    /// Elementwise product of equal shapes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("mul", self.shape(a), self.shape(b)));
        }
        let mut out = self.value(a).clone();
        for (o, x) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= x;
        }
        self.push("mul", out, Op::Mul { a, b }, &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var, TensorError> {
        let out = self.map(x, |v| v * factor);
        self.push("scale", out, Op::Scale { x, factor }, &[x])
    }

    /// `max(x, 0)`; the subgradient at zero is zero.
    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        let out = self.map(x, |v| v.max(0.0));
        self.push("relu", out, Op::Relu { x }, &[x])
    }

    /// `|x|`; the subgradient at zero is zero.
    pub fn abs(&mut self, x: Var) -> Result<Var, TensorError> {
        let out = self.map(x, f64::abs);
        self.push("abs", out, Op::Abs { x }, &[x])
    }

    pub fn square(&mut self, x: Var) -> Result<Var, TensorError> {
        let out = self.map(x, |v| v * v);
        self.push("square", out, Op::Square { x }, &[x])
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let s = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum { x }, &[x])
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, x: Var) -> Result<Var, TensorError> {
        let v = self.value(x).data();
        let s = v.iter().sum::<f64>() / v.len() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean { x }, &[x])
    }

    /// Mean squared difference of two equally shaped tensors, as a scalar.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var, TensorError> {
        if self.shape(pred) != self.shape(target) {
            return Err(mismatch("mse", self.shape(pred), self.shape(target)));
        }
        let p = self.value(pred).data();
        let t = self.value(target).data();
        let s = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
        self.push("mse", Tensor::scalar(s), Op::Mse { pred, target }, &[pred, target])
    }

    /// Row-wise softmax of `scores + mask` over the last axis.
    ///
    /// `scores` is `[.., L, L]` and the constant `mask` is `[L, L]`, holding
    /// `0` for visible and [`MASK_SENTINEL`] for blocked positions.
    pub fn masked_softmax(&mut self, scores: Var, mask: &Tensor) -> Result<Var, TensorError> {
        let ss = self.shape(scores);
        let ms = mask.shape();
        if ms.len() != 2 || ms[0] != ms[1] {
            return Err(mismatch("masked_softmax", ss, ms));
        }
        if ss.len() < 2 || ss[ss.len() - 2..] != *ms {
            return Err(mismatch("masked_softmax", ss, ms));
        }
        let l = ms[1];
        let md = mask.data();
        let mut out = self.value(scores).clone();
        for (r, row) in out.data_mut().chunks_exact_mut(l).enumerate() {
            let mrow = &md[(r % l) * l..(r % l + 1) * l];
            let mut max = f64::NEG_INFINITY;
            for (v, m) in row.iter_mut().zip(mrow) {
                *v += m;
                max = max.max(*v);
            }
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let op = Op::MaskedSoftmax {
            x: scores,
            row_len: l,
        };
        self.push("masked_softmax", out, op, &[scores])
    }

    /// Normalizes each row of the last axis to zero mean and unit variance
    /// (population variance plus `eps`), then applies `gain` and `bias`.
    pub fn layer_norm(
        &mut self,
        x: Var,
        gain: Var,
        bias: Var,
        eps: f64,
    ) -> Result<Var, TensorError> {
        let sx = self.shape(x);
        let d = *sx.last().ok_or_else(|| mismatch("layer_norm", sx, &[]))?;
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(mismatch("layer_norm", sx, self.shape(gain)));
        }
        let gv = self.value(gain).data();
        let bv = self.value(bias).data();
        let mut out = self.value(x).clone();
        let rows = out.len() / d;
        let mut means = Vec::with_capacity(rows);
        let mut rstds = Vec::with_capacity(rows);
        for row in out.data_mut().chunks_exact_mut(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rstd = 1.0 / (var + eps).sqrt();
            for ((v, g), b) in row.iter_mut().zip(gv).zip(bv) {
                *v = (*v - mean) * rstd * g + b;
            }
            means.push(mean);
            rstds.push(rstd);
        }
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            mean: means,
            rstd: rstds,
        };
        self.push("layer_norm", out, op, &[x, gain, bias])
    }

    /// Joins tensors along `axis`; all other axes must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = self
            .shape(*inputs.first().ok_or_else(|| {
                TensorError::InvalidArgument("concat of zero tensors".to_string())
            })?)
            .to_vec();
        check_axis("concat", axis, first.len())?;
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(mismatch("concat", &first, s));
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let chunks: Vec<usize> = inputs.iter().map(|&v| self.shape(v)[axis] * inner).collect();
        let total: usize = chunks.iter().sum();
        let mut out = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (&v, &chunk) in inputs.iter().zip(&chunks) {
                out.extend_from_slice(&self.value(v).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let value = Tensor::new(out_shape, out)?;
        let op = Op::Concat {
            inputs: inputs.to_vec(),
            outer,
            chunks,
        };
        self.push("concat", value, op, inputs)
    }

    /// Takes `len` consecutive entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var, TensorError> {
        let sx = self.shape(x).to_vec();
        check_axis("slice", axis, sx.len())?;
        if len == 0 || start + len > sx[axis] {
            return Err(TensorError::InvalidArgument(format!(
                "slice [{start}, {}) out of range for axis {axis} of {sx:?}",
                start + len
            )));
        }
        let outer: usize = sx[..axis].iter().product();
        let inner: usize = sx[axis + 1..].iter().product();
        let src_chunk = sx[axis] * inner;
        let (offset, chunk) = (start * inner, len * inner);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(outer * chunk);
        for o in 0..outer {
            out.extend_from_slice(&xv[o * src_chunk + offset..o * src_chunk + offset + chunk]);
        }
        let mut out_shape = sx;
        out_shape[axis] = len;
        let value = Tensor::new(out_shape, out)?;
        let op = Op::Slice {
            x,
            outer,
            src_chunk,
            offset,
            chunk,
        };
        self.push("slice", value, op, &[x])
    }

    /// Inserts a new axis at position `axis` holding `reps` copies.
    pub fn tile(&mut self, x: Var, axis: usize, reps: usize) -> Result<Var, TensorError> {
        let sx = self.shape(x).to_vec();
        check_axis("tile", axis, sx.len() + 1)?;
        if reps == 0 {
            return Err(TensorError::InvalidArgument("tile with zero repetitions".to_string()));
        }
        let outer: usize = sx[..axis].iter().product();
        let inner: usize = sx[axis..].iter().product();
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(outer * reps * inner);
        for o in 0..outer {
            for _ in 0..reps {
                out.extend_from_slice(&xv[o * inner..(o + 1) * inner]);
            }
        }
        let mut out_shape = sx;
        out_shape.insert(axis, reps);
        let value = Tensor::new(out_shape, out)?;
        let op = Op::Tile {
            x,
            outer,
            reps,
            inner,
        };
        self.push("tile", value, op, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(x).clone().reshaped(shape)?;
        self.push("reshape", value, Op::Reshape { x }, &[x])
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var, TensorError> {
        let sx = self.shape(x).to_vec();
        let mut seen = vec![false; sx.len()];
        let valid = axes.len() == sx.len()
            && axes.iter().all(|&a| a < sx.len() && !std::mem::replace(&mut seen[a], true));
        if !valid {
            return Err(TensorError::InvalidArgument(format!(
                "{axes:?} is not a permutation of the axes of {sx:?}"
            )));
        }
        let xv = self.value(x).data();
        let out: Vec<f64> = permute_source_index(&sx, axes)
            .into_iter()
            .map(|i| xv[i])
            .collect();
        let out_shape = axes.iter().map(|&a| sx[a]).collect();
        let value = Tensor::new(out_shape, out)?;
        let op = Op::Permute {
            x,
            in_shape: sx,
            axes: axes.to_vec(),
        };
        self.push("permute", value, op, &[x])
    }

    fn map(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = f(*v);
        }
        out
    }
}
