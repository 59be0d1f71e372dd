use super::gemm::gemm;
use super::{Tensor, TensorError};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(super) usize);

/// How the batch dimensions of a matmul pair up.
#[derive(Clone, Copy, Debug)]
pub(super) enum BatchMode {
    /// Both operands carry the same batch dimensions.
    Both,
    /// The right operand is a plain matrix shared by every batch entry.
    SharedRhs,
    /// The left operand is a plain matrix shared by every batch entry.
    SharedLhs,
}

#[derive(Debug)]
pub(super) enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        mode: BatchMode,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: f64,
    },
    Relu {
        x: Var,
    },
    Abs {
        x: Var,
    },
    Square {
        x: Var,
    },
    Sum {
        x: Var,
    },
    Mean {
        x: Var,
    },
    Mse {
        pred: Var,
        target: Var,
    },
    MaskedSoftmax {
        x: Var,
        row_len: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        mean: Vec<f64>,
        rstd: Vec<f64>,
    },
    Concat {
        inputs: Vec<Var>,
        outer: usize,
        chunks: Vec<usize>,
    },
    Slice {
        x: Var,
        outer: usize,
        src_chunk: usize,
        offset: usize,
        chunk: usize,
    },
    Tile {
        x: Var,
        outer: usize,
        reps: usize,
        inner: usize,
    },
    Reshape {
        x: Var,
    },
    Permute {
        x: Var,
        in_shape: Vec<usize>,
        axes: Vec<usize>,
    },
}

pub(super) struct Node {
    pub(super) value: Tensor,
    pub(super) op: Op,
    pub(super) requires_grad: bool,
    pub(super) grad: Option<Vec<f64>>,
}

/// Tape of executed operations, recorded in execution order.
///
/// Every op appends one node whose inputs already exist, so the node order is
/// a topological order and backward is a single reverse sweep.
#[derive(Default)]
pub struct Graph {
    pub(super) nodes: Vec<Node>,
    consumed: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a tensor that receives a gradient on backward.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Registers a tensor that is treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub(super) fn push(
        &mut self,
        name: &'static str,
        value: Tensor,
        op: Op,
        inputs: &[Var],
    ) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Gradient of the last backward pass, if `var` was reachable and
    /// requires a gradient.
    pub fn grad(&self, var: Var) -> Option<&[f64]> {
        self.nodes[var.0].grad.as_deref()
    }

    /// Moves the gradient out of the graph.
    pub fn take_grad(&mut self, var: Var) -> Option<Vec<f64>> {
        self.nodes[var.0].grad.take()
    }

    /// Back-propagates from a scalar loss.
    ///
    /// The graph can only be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.consumed {
            return Err(TensorError::BackwardTwice);
        }
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: loss_value.shape().to_vec(),
            });
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (node, grad) in self.nodes.iter_mut().zip(grads) {
            if node.requires_grad {
                node.grad = grad;
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.data();
        let wants = |v: Var| nodes[v.0].requires_grad;
        match &nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul {
                a,
                b,
                mode,
                batch,
                m,
                k,
                n,
            } => {
                let (av, bv) = (val(a), val(b));
                if wants(a) {
                    let da = grad_buf(grads, a, av.len());
                    match mode {
                        BatchMode::SharedRhs => gemm(batch * m, n, k, g, false, bv, true, da, 1.0),
                        BatchMode::Both => {
                            for t in 0..batch {
                                gemm(
                                    m,
                                    n,
                                    k,
                                    &g[t * m * n..(t + 1) * m * n],
                                    false,
                                    &bv[t * k * n..(t + 1) * k * n],
                                    true,
                                    &mut da[t * m * k..(t + 1) * m * k],
                                    1.0,
                                );
                            }
                        }
                        BatchMode::SharedLhs => {
                            for t in 0..batch {
                                gemm(
                                    m,
                                    n,
                                    k,
                                    &g[t * m * n..(t + 1) * m * n],
                                    false,
                                    &bv[t * k * n..(t + 1) * k * n],
                                    true,
                                    da,
                                    1.0,
                                );
                            }
                        }
                    }
                }
                if wants(b) {
                    let db = grad_buf(grads, b, bv.len());
                    match mode {
                        BatchMode::SharedRhs => gemm(k, batch * m, n, av, true, g, false, db, 1.0),
                        BatchMode::Both => {
                            for t in 0..batch {
                                gemm(
                                    k,
                                    m,
                                    n,
                                    &av[t * m * k..(t + 1) * m * k],
                                    true,
                                    &g[t * m * n..(t + 1) * m * n],
                                    false,
                                    &mut db[t * k * n..(t + 1) * k * n],
                                    1.0,
                                );
                            }
                        }
                        BatchMode::SharedLhs => {
                            for t in 0..batch {
                                gemm(
                                    k,
                                    m,
                                    n,
                                    av,
                                    true,
                                    &g[t * m * n..(t + 1) * m * n],
                                    false,
                                    &mut db[t * k * n..(t + 1) * k * n],
                                    1.0,
                                );
                            }
                        }
                    }
                }
            }
            &Op::Add { a, b } => {
                if wants(a) {
                    axpy(grad_buf(grads, a, g.len()), g);
                }
                if wants(b) {
                    let blen = val(b).len();
                    let db = grad_buf(grads, b, blen);
                    for chunk in g.chunks_exact(blen) {
                        axpy(db, chunk);
                    }
                }
            }
            &Op::Mul { a, b } => {
                let (av, bv) = (val(a), val(b));
                if wants(a) {
                    let da = grad_buf(grads, a, av.len());
                    for ((d, gi), bi) in da.iter_mut().zip(g).zip(bv) {
                        *d += gi * bi;
                    }
                }
                if wants(b) {
                    let db = grad_buf(grads, b, bv.len());
                    for ((d, gi), ai) in db.iter_mut().zip(g).zip(av) {
                        *d += gi * ai;
                    }
                }
            }
            &Op::Scale { x, factor } => {
                if wants(x) {
                    let dx = grad_buf(grads, x, g.len());
                    for (d, gi) in dx.iter_mut().zip(g) {
                        *d += gi * factor;
                    }
                }
            }
            &Op::Relu { x } => {
                if wants(x) {
                    let xv = val(x);
                    let dx = grad_buf(grads, x, xv.len());
                    for ((d, gi), xi) in dx.iter_mut().zip(g).zip(xv) {
                        if *xi > 0.0 {
                            *d += gi;
                        }
                    }
                }
            }
            &Op::Abs { x } => {
                if wants(x) {
                    let xv = val(x);
                    let dx = grad_buf(grads, x, xv.len());
                    for ((d, gi), xi) in dx.iter_mut().zip(g).zip(xv) {
                        if *xi > 0.0 {
                            *d += gi;
                        } else if *xi < 0.0 {
                            *d -= gi;
                        }
                    }
                }
            }
            &Op::Square { x } => {
                if wants(x) {
                    let xv = val(x);
                    let dx = grad_buf(grads, x, xv.len());
                    for ((d, gi), xi) in dx.iter_mut().zip(g).zip(xv) {
                        *d += 2.0 * xi * gi;
                    }
                }
            }
            &Op::Sum { x } => {
                if wants(x) {
                    let len = val(x).len();
                    for d in grad_buf(grads, x, len) {
                        *d += g[0];
                    }
                }
            }
            &Op::Mean { x } => {
                if wants(x) {
                    let len = val(x).len();
                    let share = g[0] / len as f64;
                    for d in grad_buf(grads, x, len) {
                        *d += share;
                    }
                }
            }
            &Op::Mse { pred, target } => {
                let (pv, tv) = (val(pred), val(target));
                let coef = 2.0 * g[0] / pv.len() as f64;
                if wants(pred) {
                    let dp = grad_buf(grads, pred, pv.len());
                    for ((d, p), t) in dp.iter_mut().zip(pv).zip(tv) {
                        *d += coef * (p - t);
                    }
                }
                if wants(target) {
                    let dt = grad_buf(grads, target, tv.len());
                    for ((d, p), t) in dt.iter_mut().zip(pv).zip(tv) {
                        *d -= coef * (p - t);
                    }
                }
            }
            &Op::MaskedSoftmax { x, row_len } => {
                if wants(x) {
                    let y = nodes[i].value.data();
                    let dx = grad_buf(grads, x, y.len());
                    for ((dxr, yr), gr) in dx
                        .chunks_exact_mut(row_len)
                        .zip(y.chunks_exact(row_len))
                        .zip(g.chunks_exact(row_len))
                    {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((d, yi), gi) in dxr.iter_mut().zip(yr).zip(gr) {
                            *d += yi * (gi - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                rstd,
            } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let xv = val(x);
                let gv = val(gain);
                let d = gv.len();
                if wants(x) {
                    let dx = grad_buf(grads, x, xv.len());
                    let mut dxhat = vec![0.0; d];
                    let mut xhat = vec![0.0; d];
                    for (r, ((dxr, xr), gr)) in dx
                        .chunks_exact_mut(d)
                        .zip(xv.chunks_exact(d))
                        .zip(g.chunks_exact(d))
                        .enumerate()
                    {
                        let (mu, rs) = (mean[r], rstd[r]);
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        for j in 0..d {
                            xhat[j] = (xr[j] - mu) * rs;
                            dxhat[j] = gr[j] * gv[j];
                            sum_dxhat += dxhat[j];
                            sum_dxhat_xhat += dxhat[j] * xhat[j];
                        }
                        let inv_d = 1.0 / d as f64;
                        for j in 0..d {
                            dxr[j] += rs
                                * (dxhat[j] - inv_d * sum_dxhat - xhat[j] * inv_d * sum_dxhat_xhat);
                        }
                    }
                }
                if wants(gain) {
                    let dg = grad_buf(grads, gain, d);
                    for (r, (xr, gr)) in xv.chunks_exact(d).zip(g.chunks_exact(d)).enumerate() {
                        for j in 0..d {
                            dg[j] += gr[j] * (xr[j] - mean[r]) * rstd[r];
                        }
                    }
                }
                if wants(bias) {
                    let db = grad_buf(grads, bias, d);
                    for gr in g.chunks_exact(d) {
                        axpy(db, gr);
                    }
                }
            }
            Op::Concat {
                inputs,
                outer,
                chunks,
            } => {
                let total: usize = chunks.iter().sum();
                let mut offset = 0;
                for (&input, &chunk) in inputs.iter().zip(chunks) {
                    if wants(input) {
                        let dx = grad_buf(grads, input, outer * chunk);
                        for o in 0..*outer {
                            let src = &g[o * total + offset..o * total + offset + chunk];
                            axpy(&mut dx[o * chunk..(o + 1) * chunk], src);
                        }
                    }
                    offset += chunk;
                }
            }
            &Op::Slice {
                x,
                outer,
                src_chunk,
                offset,
                chunk,
            } => {
                if wants(x) {
                    let dx = grad_buf(grads, x, outer * src_chunk);
                    for o in 0..outer {
                        let dst = &mut dx[o * src_chunk + offset..o * src_chunk + offset + chunk];
                        axpy(dst, &g[o * chunk..(o + 1) * chunk]);
                    }
                }
            }
            &Op::Tile {
                x,
                outer,
                reps,
                inner,
            } => {
                if wants(x) {
                    let dx = grad_buf(grads, x, outer * inner);
                    for o in 0..outer {
                        for r in 0..reps {
                            let start = (o * reps + r) * inner;
                            axpy(&mut dx[o * inner..(o + 1) * inner], &g[start..start + inner]);
                        }
                    }
                }
            }
            &Op::Reshape { x } => {
                if wants(x) {
                    axpy(grad_buf(grads, x, g.len()), g);
                }
            }
            Op::Permute { x, in_shape, axes } => {
                if wants(*x) {
                    let map = permute_source_index(in_shape, axes);
                    let dx = grad_buf(grads, *x, g.len());
                    for (gi, &src) in g.iter().zip(&map) {
                        dx[src] += gi;
                    }
                }
            }
        }
    }
}

fn grad_buf(grads: &mut [Option<Vec<f64>>], var: Var, len: usize) -> &mut [f64] {
    grads[var.0].get_or_insert_with(|| vec![0.0; len])
}

fn axpy(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// For each element of the permuted output, the linear index it reads in the
/// input.
pub(super) fn permute_source_index(in_shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let nd = in_shape.len();
    let mut in_strides = vec![1usize; nd];
    for i in (0..nd.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let total: usize = in_shape.iter().product();
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; nd];
    let mut src = 0usize;
    for _ in 0..total {
        map.push(src);
        for ax in (0..nd).rev() {
            idx[ax] += 1;
            src += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            src -= strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    map
}
