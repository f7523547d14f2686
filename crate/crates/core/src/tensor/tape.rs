use std::cell::RefCell;
use std::rc::Rc;

use super::kernels::{self, ConvGeom};
use super::ops::ReduceKind;
use super::{DType, Tensor};
use crate::{Error, Result};

/// Append-only record of operations, replayed in reverse by
/// [`Tape::backward`].
///
/// Nodes are stored in creation order, so every node's inputs precede it.
/// Gradient accumulators persist across `backward` calls until
/// [`Tape::zero_grad`].
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

#[derive(Clone)]
pub(crate) struct NodeRef {
    pub tape: Tape,
    pub id: usize,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

struct Node {
    op: Op,
    inputs: Vec<Saved>,
    out: Rc<Vec<f64>>,
    numel: usize,
}

/// An operation input: its node (if tracked) and its forward value.
pub(crate) struct Saved {
    id: Option<usize>,
    data: Rc<Vec<f64>>,
}

pub(crate) enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Neg,
    Relu,
    Softplus,
    Sigmoid,
    Exp,
    Log,
    Scale(f64),
    Shift,
    MatMul {
        m: usize,
        k: usize,
        n: usize,
        trans_b: bool,
    },
    Transpose {
        rows: usize,
        cols: usize,
    },
    Conv2d(ConvGeom),
    Reduce {
        kind: ReduceKind,
        outer: usize,
        len: usize,
        inner: usize,
        argmax: Vec<usize>,
    },
    Reshape,
    Permute {
        map: Vec<usize>,
    },
    Concat {
        outer: usize,
        blocks: Vec<usize>,
    },
    Gather {
        indices: Vec<usize>,
    },
    AddRow {
        cols: usize,
    },
    AddChannel {
        channels: usize,
        spatial: usize,
    },
    PairAdd {
        p: usize,
        q: usize,
        h: usize,
    },
    BatchNorm {
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch: usize,
        channels: usize,
        spatial: usize,
        train: bool,
    },
    LayerNorm {
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        rows: usize,
        cols: usize,
    },
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Records `t`'s value as a new leaf.
    pub fn leaf(&self, t: &Tensor) -> Tensor {
        let id = self.push(Op::Leaf, Vec::new(), Rc::clone(&t.data));
        Tensor {
            shape: t.shape.clone(),
            dtype: t.dtype,
            data: Rc::clone(&t.data),
            node: Some(NodeRef {
                tape: self.clone(),
                id,
            }),
        }
    }

    fn push(&self, op: Op, inputs: Vec<Saved>, out: Rc<Vec<f64>>) -> usize {
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        let numel = out.len();
        inner.nodes.push(Node {
            op,
            inputs,
            out,
            numel,
        });
        inner.grads.push(None);
        id
    }

    /// Accumulated gradient for `t`. Zeros if `t` is on this tape but was
    /// never reached; `None` if it is not on this tape.
    pub fn grad(&self, t: &Tensor) -> Option<Tensor> {
        let node = t.node.as_ref()?;
        if !node.tape.same(self) {
            return None;
        }
        let inner = self.inner.borrow();
        let data = inner.grads[node.id]
            .clone()
            .unwrap_or_else(|| vec![0.0; t.numel()]);
        Some(Tensor::from_parts(t.shape.clone(), DType::F64, data))
    }

    pub fn zero_grad(&self) {
        for g in self.inner.borrow_mut().grads.iter_mut() {
            *g = None;
        }
    }

    /// Propagates d(root)/d(node) to every node reachable from `root` and adds
    /// the result into the accumulators.
    pub fn backward(&self, root: &Tensor) -> Result<()> {
        let node = match &root.node {
            Some(n) if n.tape.same(self) && root.numel() == 1 => n,
            _ => return Err(Error::InvalidRoot(root.shape.clone())),
        };
        let mut inner = self.inner.borrow_mut();
        let TapeInner { nodes, grads } = &mut *inner;
        let mut local: Vec<Option<Vec<f64>>> = vec![None; node.id + 1];
        local[node.id] = Some(vec![1.0]);
        for id in (0..=node.id).rev() {
            let Some(g) = local[id].take() else { continue };
            let n = &nodes[id];
            debug_assert_eq!(g.len(), n.numel);
            let wanted: Vec<bool> = n.inputs.iter().map(|s| s.id.is_some()).collect();
            if wanted.iter().any(|&w| w) {
                let input_grads = backward_op(&n.op, &n.inputs, &n.out, &g, &wanted);
                for (saved, ig) in n.inputs.iter().zip(input_grads) {
                    if let (Some(src), Some(ig)) = (saved.id, ig) {
                        accumulate(&mut local[src], ig);
                    }
                }
            }
            accumulate(&mut grads[id], g);
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: Vec<f64>) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.iter_mut().zip(&g) {
                *a += b;
            }
        }
        None => *slot = Some(g),
    }
}

/// Creates the output tensor of an op, recording it when any input is tracked.
pub(crate) fn record(
    op: Op,
    name: &'static str,
    inputs: &[&Tensor],
    shape: Vec<usize>,
    mut data: Vec<f64>,
) -> Result<Tensor> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(name));
    }
    let dtype = inputs
        .iter()
        .map(|t| t.dtype)
        .reduce(DType::promote)
        .unwrap_or(DType::F64);
    dtype.round(&mut data);
    let mut tape: Option<&Tape> = None;
    for t in inputs {
        if let Some(n) = &t.node {
            match tape {
                Some(tp) if !tp.same(&n.tape) => return Err(Error::TapeMismatch),
                _ => tape = Some(&n.tape),
            }
        }
    }
    let data = Rc::new(data);
    let node = tape.map(|tp| {
        let saved = inputs
            .iter()
            .map(|t| Saved {
                id: t.node.as_ref().map(|n| n.id),
                data: Rc::clone(&t.data),
            })
            .collect();
        NodeRef {
            tape: tp.clone(),
            id: tp.push(op, saved, Rc::clone(&data)),
        }
    });
    Ok(Tensor {
        shape,
        dtype,
        data,
        node,
    })
}

/// Sums `g` down to a single element when the input was broadcast.
fn unbroadcast(g: Vec<f64>, input_len: usize) -> Vec<f64> {
    if input_len == g.len() {
        g
    } else {
        vec![g.iter().sum()]
    }
}

fn bcast(v: &[f64], i: usize) -> f64 {
    if v.len() == 1 {
        v[0]
    } else {
        v[i]
    }
}

fn unary(g: &[f64], f: impl Fn(usize) -> f64) -> Vec<Option<Vec<f64>>> {
    vec![Some(g.iter().enumerate().map(|(i, gi)| gi * f(i)).collect())]
}

/// Normalisation backward for one group of `n` elements sharing a statistic.
/// `dxhat` holds upstream grads already multiplied by gamma.
fn norm_group_backward(dxhat: &[f64], xhat: &[f64], inv_std: f64, out: &mut [f64]) {
    let n = dxhat.len() as f64;
    let sum: f64 = dxhat.iter().sum();
    let dot: f64 = dxhat.iter().zip(xhat).map(|(d, x)| d * x).sum();
    for ((o, d), x) in out.iter_mut().zip(dxhat).zip(xhat) {
        *o = inv_std / n * (n * d - sum - x * dot);
    }
}

fn backward_op(
    op: &Op,
    inputs: &[Saved],
    out: &[f64],
    g: &[f64],
    wanted: &[bool],
) -> Vec<Option<Vec<f64>>> {
    let x = |i: usize| -> &[f64] { &inputs[i].data };
    match op {
        Op::Leaf => Vec::new(),
        Op::Add => vec![
            wanted[0].then(|| unbroadcast(g.to_vec(), x(0).len())),
            wanted[1].then(|| unbroadcast(g.to_vec(), x(1).len())),
        ],
        Op::Sub => vec![
            wanted[0].then(|| unbroadcast(g.to_vec(), x(0).len())),
            wanted[1].then(|| unbroadcast(g.iter().map(|v| -v).collect(), x(1).len())),
        ],
        Op::Mul => {
            let (a, b) = (x(0), x(1));
            vec![
                wanted[0].then(|| {
                    let ga = g.iter().enumerate().map(|(i, gi)| gi * bcast(b, i)).collect();
                    unbroadcast(ga, a.len())
                }),
                wanted[1].then(|| {
                    let gb = g.iter().enumerate().map(|(i, gi)| gi * bcast(a, i)).collect();
                    unbroadcast(gb, b.len())
                }),
            ]
        }
        Op::Neg => unary(g, |_| -1.0),
        Op::Relu => unary(g, |i| if x(0)[i] > 0.0 { 1.0 } else { 0.0 }),
        Op::Softplus => unary(g, |i| kernels::sigmoid(x(0)[i])),
        Op::Sigmoid => unary(g, |i| out[i] * (1.0 - out[i])),
        Op::Exp => unary(g, |i| out[i]),
        Op::Log => unary(g, |i| 1.0 / x(0)[i]),
        Op::Scale(c) => unary(g, |_| *c),
        Op::Shift => vec![Some(g.to_vec())],
        &Op::MatMul { m, k, n, trans_b } => {
            let (a, b) = (x(0), x(1));
            // b is [k, n], or [n, k] when trans_b.
            let b_strides = if trans_b { (1, k) } else { (n, 1) };
            let ga = wanted[0].then(|| {
                let mut ga = vec![0.0; m * k];
                // g [m,n] · bᵀ [n,k]
                kernels::gemm(m, n, k, g, (n, 1), b, (b_strides.1, b_strides.0), &mut ga, false);
                ga
            });
            let gb = wanted[1].then(|| {
                if trans_b {
                    let mut gb = vec![0.0; n * k];
                    // gᵀ [n,m] · a [m,k]
                    kernels::gemm(n, m, k, g, (1, n), a, (k, 1), &mut gb, false);
                    gb
                } else {
                    let mut gb = vec![0.0; k * n];
                    // aᵀ [k,m] · g [m,n]
                    kernels::gemm(k, m, n, a, (1, k), g, (n, 1), &mut gb, false);
                    gb
                }
            });
            vec![ga, gb]
        }
        &Op::Transpose { rows, cols } => {
            let mut gi = vec![0.0; rows * cols];
            for r in 0..rows {
                for c in 0..cols {
                    gi[r * cols + c] = g[c * rows + r];
                }
            }
            vec![Some(gi)]
        }
        Op::Conv2d(geom) => vec![
            wanted[0].then(|| geom.grad_input(x(1), g)),
            wanted[1].then(|| geom.grad_kernel(x(0), g)),
        ],
        Op::Reduce {
            kind,
            outer,
            len,
            inner,
            argmax,
        } => {
            let (outer, len, inner) = (*outer, *len, *inner);
            let a = x(0);
            let mut gi = vec![0.0; outer * len * inner];
            for o in 0..outer {
                for j in 0..inner {
                    let oi = o * inner + j;
                    for l in 0..len {
                        let idx = (o * len + l) * inner + j;
                        gi[idx] = match kind {
                            ReduceKind::Sum => g[oi],
                            ReduceKind::Mean => g[oi] / len as f64,
                            ReduceKind::LogSumExp => g[oi] * (a[idx] - out[oi]).exp(),
                            ReduceKind::Max => {
                                if argmax[oi] == l {
                                    g[oi]
                                } else {
                                    0.0
                                }
                            }
                        };
                    }
                }
            }
            vec![Some(gi)]
        }
        Op::Reshape => vec![Some(g.to_vec())],
        Op::Permute { map } => {
            let mut gi = vec![0.0; g.len()];
            for (o, &i) in map.iter().enumerate() {
                gi[i] = g[o];
            }
            vec![Some(gi)]
        }
        Op::Concat { outer, blocks } => {
            let total: usize = blocks.iter().sum();
            let mut offset = 0;
            blocks
                .iter()
                .zip(wanted)
                .map(|(&blk, &want)| {
                    let start = offset;
                    offset += blk;
                    want.then(|| {
                        let mut gi = Vec::with_capacity(outer * blk);
                        for o in 0..*outer {
                            let base = o * total + start;
                            gi.extend_from_slice(&g[base..base + blk]);
                        }
                        gi
                    })
                })
                .collect()
        }
        Op::Gather { indices } => {
            let mut gi = vec![0.0; x(0).len()];
            for (o, &i) in indices.iter().enumerate() {
                gi[i] += g[o];
            }
            vec![Some(gi)]
        }
        &Op::AddRow { cols } => {
            let gb = wanted[1].then(|| {
                let mut gb = vec![0.0; cols];
                for row in g.chunks(cols) {
                    for (acc, v) in gb.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                gb
            });
            vec![wanted[0].then(|| g.to_vec()), gb]
        }
        &Op::AddChannel { channels, spatial } => {
            let gb = wanted[1].then(|| {
                let mut gb = vec![0.0; channels];
                for (i, chunk) in g.chunks(spatial).enumerate() {
                    gb[i % channels] += chunk.iter().sum::<f64>();
                }
                gb
            });
            vec![wanted[0].then(|| g.to_vec()), gb]
        }
        &Op::PairAdd { p, q, h } => {
            let gx = wanted[0].then(|| {
                let mut gx = vec![0.0; p * h];
                for i in 0..p {
                    let dst = &mut gx[i * h..(i + 1) * h];
                    for j in 0..q {
                        let src = &g[(i * q + j) * h..(i * q + j + 1) * h];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                gx
            });
            let gy = wanted[1].then(|| {
                let mut gy = vec![0.0; q * h];
                for i in 0..p {
                    for j in 0..q {
                        let src = &g[(i * q + j) * h..(i * q + j + 1) * h];
                        for (d, s) in gy[j * h..(j + 1) * h].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                gy
            });
            vec![gx, gy]
        }
        Op::BatchNorm {
            xhat,
            inv_std,
            batch,
            channels,
            spatial,
            train,
        } => {
            let (b, c, s) = (*batch, *channels, *spatial);
            let gamma = x(1);
            let idx = |bi: usize, ci: usize, si: usize| (bi * c + ci) * s + si;
            let mut gx = vec![0.0; b * c * s];
            let mut ggamma = vec![0.0; c];
            let mut gbeta = vec![0.0; c];
            let mut dxhat = Vec::with_capacity(b * s);
            let mut xh = Vec::with_capacity(b * s);
            let mut tmp = vec![0.0; b * s];
            for ci in 0..c {
                dxhat.clear();
                xh.clear();
                for bi in 0..b {
                    for si in 0..s {
                        let i = idx(bi, ci, si);
                        ggamma[ci] += g[i] * xhat[i];
                        gbeta[ci] += g[i];
                        dxhat.push(g[i] * gamma[ci]);
                        xh.push(xhat[i]);
                    }
                }
                if !wanted[0] {
                    continue;
                }
                if *train {
                    norm_group_backward(&dxhat, &xh, inv_std[ci], &mut tmp);
                } else {
                    for (t, d) in tmp.iter_mut().zip(&dxhat) {
                        *t = d * inv_std[ci];
                    }
                }
                for bi in 0..b {
                    for si in 0..s {
                        gx[idx(bi, ci, si)] = tmp[bi * s + si];
                    }
                }
            }
            vec![wanted[0].then_some(gx), Some(ggamma), Some(gbeta)]
        }
        &Op::LayerNorm {
            ref xhat,
            ref inv_std,
            rows,
            cols,
        } => {
            let gamma = x(1);
            let mut gx = vec![0.0; rows * cols];
            let mut ggamma = vec![0.0; cols];
            let mut gbeta = vec![0.0; cols];
            let mut dxhat = vec![0.0; cols];
            for r in 0..rows {
                let span = r * cols..(r + 1) * cols;
                for (c, (gi, xh)) in g[span.clone()].iter().zip(&xhat[span.clone()]).enumerate() {
                    ggamma[c] += gi * xh;
                    gbeta[c] += gi;
                    dxhat[c] = gi * gamma[c];
                }
                norm_group_backward(&dxhat, &xhat[span.clone()], inv_std[r], &mut gx[span]);
            }
            vec![wanted[0].then_some(gx), Some(ggamma), Some(gbeta)]
        }
    }
}
