use super::kernels::{self, axis_split, permute_map, ConvGeom, Padding};
use super::tape::{record, Op};
use super::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    LogSumExp,
    /// Subgradient goes to the first maximal element.
    Max,
}

impl Tensor {
    fn binary(&self, other: &Tensor, op: Op, name: &'static str, f: fn(f64, f64) -> f64) -> Result<Tensor> {
        let (a, b) = (self.data(), other.data());
        let (shape, data): (Vec<usize>, Vec<f64>) = if self.shape == other.shape {
            (self.shape.clone(), a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
        } else if b.len() == 1 {
            (self.shape.clone(), a.iter().map(|x| f(*x, b[0])).collect())
        } else if a.len() == 1 {
            (other.shape.clone(), b.iter().map(|y| f(a[0], *y)).collect())
        } else {
            return Err(Error::ShapeMismatch {
                op: name,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        };
        record(op, name, &[self, other], shape, data)
    }

    fn unary(&self, op: Op, name: &'static str, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let data = self.data().iter().map(|&v| f(v)).collect();
        record(op, name, &[self], self.shape.clone(), data)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Add, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Sub, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, Op::Mul, "mul", |a, b| a * b)
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.unary(Op::Neg, "neg", |v| -v)
    }

    pub fn relu(&self) -> Result<Tensor> {
        self.unary(Op::Relu, "relu", |v| v.max(0.0))
    }

    /// `ln(1 + e^z)`, evaluated as `max(z, 0) + ln(1 + e^-|z|)`.
    pub fn softplus(&self) -> Result<Tensor> {
        self.unary(Op::Softplus, "softplus", kernels::softplus)
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        self.unary(Op::Sigmoid, "sigmoid", kernels::sigmoid)
    }

    pub fn exp(&self) -> Result<Tensor> {
        self.unary(Op::Exp, "exp", f64::exp)
    }

    pub fn log(&self) -> Result<Tensor> {
        if let Some(bad) = self.data().iter().find(|&&v| v <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                reason: format!("non-positive input {bad}"),
            });
        }
        self.unary(Op::Log, "log", f64::ln)
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        self.unary(Op::Scale(c), "scale", |v| v * c)
    }

    pub fn shift(&self, c: f64) -> Result<Tensor> {
        self.unary(Op::Shift, "shift", |v| v + c)
    }

    /// `[m, k] · [k, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        self.matmul_impl(other, false)
    }

    /// `[m, k] · [n, k]ᵀ`, without materialising the transpose.
    pub fn matmul_t(&self, other: &Tensor) -> Result<Tensor> {
        self.matmul_impl(other, true)
    }

    fn matmul_impl(&self, other: &Tensor, trans_b: bool) -> Result<Tensor> {
        let mismatch = || Error::ShapeMismatch {
            op: "matmul",
            lhs: self.shape.clone(),
            rhs: other.shape.clone(),
        };
        if self.rank() != 2 || other.rank() != 2 {
            return Err(mismatch());
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (kb, n) = if trans_b {
            (other.shape[1], other.shape[0])
        } else {
            (other.shape[0], other.shape[1])
        };
        if k != kb {
            return Err(mismatch());
        }
        let b_strides = if trans_b { (1, k) } else { (n, 1) };
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, self.data(), (k, 1), other.data(), b_strides, &mut out, false);
        record(Op::MatMul { m, k, n, trans_b }, "matmul", &[self, other], vec![m, n], out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: "transpose expects a matrix".into(),
            });
        }
        let (rows, cols) = (self.shape[0], self.shape[1]);
        let a = self.data();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = a[r * cols + c];
            }
        }
        record(Op::Transpose { rows, cols }, "transpose", &[self], vec![cols, rows], out)
    }

    /// Direct 2-D cross-correlation of `[B, Cin, H, W]` with `[Cout, Cin, kh, kw]`.
    pub fn conv2d(&self, kernel: &Tensor, stride: usize, padding: Padding) -> Result<Tensor> {
        let geom = ConvGeom::new(&self.shape, &kernel.shape, stride, padding)?;
        let out = geom.forward(self.data(), kernel.data());
        record(Op::Conv2d(geom), "conv2d", &[self, kernel], geom.out_shape(), out)
    }

    /// Reduces along `axis`, or over every element when `axis` is `None`.
    pub fn reduce(&self, kind: ReduceKind, axis: Option<usize>) -> Result<Tensor> {
        let (outer, len, inner, shape) = match axis {
            None => (1, self.numel(), 1, Vec::new()),
            Some(ax) if ax < self.rank() => {
                let (o, l, i) = axis_split(&self.shape, ax);
                let mut s = self.shape.clone();
                s.remove(ax);
                (o, l, i, s)
            }
            Some(ax) => {
                return Err(Error::invalid(format!(
                    "reduction axis {ax} out of range for shape {:?}",
                    self.shape
                )))
            }
        };
        if len == 0 {
            return Err(Error::EmptyReduction("reduce"));
        }
        let a = self.data();
        let mut out = vec![0.0; outer * inner];
        let mut argmax = Vec::new();
        if kind == ReduceKind::Max {
            argmax = vec![0; outer * inner];
        }
        for o in 0..outer {
            for j in 0..inner {
                let at = |l: usize| a[(o * len + l) * inner + j];
                let oi = o * inner + j;
                out[oi] = match kind {
                    ReduceKind::Sum => (0..len).map(at).sum(),
                    ReduceKind::Mean => (0..len).map(at).sum::<f64>() / len as f64,
                    ReduceKind::LogSumExp => {
                        let m = (0..len).map(at).fold(f64::NEG_INFINITY, f64::max);
                        m + (0..len).map(|l| (at(l) - m).exp()).sum::<f64>().ln()
                    }
                    ReduceKind::Max => {
                        let mut best = 0;
                        for l in 1..len {
                            if at(l) > at(best) {
                                best = l;
                            }
                        }
                        argmax[oi] = best;
                        at(best)
                    }
                };
            }
        }
        let op = Op::Reduce {
            kind,
            outer,
            len,
            inner,
            argmax,
        };
        record(op, "reduce", &[self], shape, out)
    }

    pub fn sum(&self) -> Result<Tensor> {
        self.reduce(ReduceKind::Sum, None)
    }

    pub fn mean(&self) -> Result<Tensor> {
        self.reduce(ReduceKind::Mean, None)
    }

    pub fn logsumexp(&self) -> Result<Tensor> {
        self.reduce(ReduceKind::LogSumExp, None)
    }

    pub fn max(&self) -> Result<Tensor> {
        self.reduce(ReduceKind::Max, None)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() || shape.contains(&0) {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        record(Op::Reshape, "reshape", &[self], shape.to_vec(), self.to_vec())
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor> {
        let mut seen = vec![false; self.rank()];
        if axes.len() != self.rank() || axes.iter().any(|&a| a >= self.rank() || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::invalid(format!("{axes:?} is not a permutation of {} axes", self.rank())));
        }
        let map = permute_map(&self.shape, axes);
        let a = self.data();
        let out = map.iter().map(|&i| a[i]).collect();
        let shape = axes.iter().map(|&ax| self.shape[ax]).collect();
        record(Op::Permute { map }, "permute", &[self], shape, out)
    }

    /// Joins tensors that agree on every axis except `axis`.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat of nothing"))?;
        if axis >= first.rank() {
            return Err(Error::invalid("concat axis out of range"));
        }
        for p in parts {
            let same = p.rank() == first.rank()
                && p.shape.iter().zip(&first.shape).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !same {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
        }
        let (outer, _, inner) = axis_split(&first.shape, axis);
        let blocks: Vec<usize> = parts.iter().map(|p| p.shape[axis] * inner).collect();
        let mut out = Vec::with_capacity(parts.iter().map(|p| p.numel()).sum());
        for o in 0..outer {
            for (p, &blk) in parts.iter().zip(&blocks) {
                out.extend_from_slice(&p.data()[o * blk..(o + 1) * blk]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = parts.iter().map(|p| p.shape[axis]).sum();
        record(Op::Concat { outer, blocks }, "concat", parts, shape, out)
    }

    /// Picks flat elements by index into a tensor of `shape`.
    pub fn gather(&self, indices: Vec<usize>, shape: &[usize]) -> Result<Tensor> {
        if indices.len() != shape.iter().product::<usize>() {
            return Err(Error::invalid("gather: index count does not match shape"));
        }
        let a = self.data();
        if let Some(&bad) = indices.iter().find(|&&i| i >= a.len()) {
            return Err(Error::invalid(format!("gather index {bad} out of range {}", a.len())));
        }
        let out = indices.iter().map(|&i| a[i]).collect();
        record(Op::Gather { indices }, "gather", &[self], shape.to_vec(), out)
    }

    /// Selects entries along `axis` in the given order.
    pub fn index_select(&self, axis: usize, idx: &[usize]) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(Error::invalid("index_select axis out of range"));
        }
        let (outer, len, inner) = axis_split(&self.shape, axis);
        if idx.iter().any(|&i| i >= len) {
            return Err(Error::invalid("index_select index out of range"));
        }
        let mut flat = Vec::with_capacity(outer * idx.len() * inner);
        for o in 0..outer {
            for &i in idx {
                let base = (o * len + i) * inner;
                flat.extend(base..base + inner);
            }
        }
        let mut shape = self.shape.clone();
        shape[axis] = idx.len();
        self.gather(flat, &shape)
    }

    /// Adds `bias[c]` to every row of a `[.., C]` tensor.
    pub fn add_row(&self, bias: &Tensor) -> Result<Tensor> {
        let cols = *self.shape.last().unwrap_or(&0);
        if bias.shape != [cols] {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: self.shape.clone(),
                rhs: bias.shape.clone(),
            });
        }
        let b = bias.data();
        let out = self.data().iter().enumerate().map(|(i, v)| v + b[i % cols]).collect();
        record(Op::AddRow { cols }, "add_row", &[self, bias], self.shape.clone(), out)
    }

    /// Adds `bias[c]` across channel `c` of a `[B, C, ...]` tensor.
    pub fn add_channel(&self, bias: &Tensor) -> Result<Tensor> {
        if self.rank() < 2 || bias.shape != [self.shape[1]] {
            return Err(Error::ShapeMismatch {
                op: "add_channel",
                lhs: self.shape.clone(),
                rhs: bias.shape.clone(),
            });
        }
        let channels = self.shape[1];
        let spatial: usize = self.shape[2..].iter().product();
        let b = bias.data();
        let out = self
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + b[(i / spatial) % channels])
            .collect();
        record(Op::AddChannel { channels, spatial }, "add_channel", &[self, bias], self.shape.clone(), out)
    }

    /// All pairwise row sums: `out[i·Q + j] = self[i] + other[j]` for
    /// `[P, H]` and `[Q, H]` inputs.
    pub fn pair_add(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[1] {
            return Err(Error::ShapeMismatch {
                op: "pair_add",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let (p, q, h) = (self.shape[0], other.shape[0], self.shape[1]);
        let (a, b) = (self.data(), other.data());
        let mut out = Vec::with_capacity(p * q * h);
        for i in 0..p {
            let ra = &a[i * h..(i + 1) * h];
            for j in 0..q {
                out.extend(ra.iter().zip(&b[j * h..(j + 1) * h]).map(|(x, y)| x + y));
            }
        }
        record(Op::PairAdd { p, q, h }, "pair_add", &[self, other], vec![p * q, h], out)
    }

    /// Per-channel normalisation of `[B, C, ...]`. With `stats = None` the
    /// batch statistics (biased variance) are used and returned; otherwise
    /// the supplied `(mean, var)` are treated as constants.
    pub fn batch_norm(
        &self,
        gamma: &Tensor,
        beta: &Tensor,
        stats: Option<(&[f64], &[f64])>,
        eps: f64,
    ) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
        if self.rank() < 2 || gamma.shape != [self.shape[1]] || beta.shape != [self.shape[1]] {
            return Err(Error::ShapeMismatch {
                op: "batch_norm",
                lhs: self.shape.clone(),
                rhs: gamma.shape.clone(),
            });
        }
        let (b, c) = (self.shape[0], self.shape[1]);
        let s: usize = self.shape[2..].iter().product();
        let x = self.data();
        let idx = |bi: usize, ci: usize, si: usize| (bi * c + ci) * s + si;
        let (mean, var) = match stats {
            Some((m, v)) => (m.to_vec(), v.to_vec()),
            None => {
                let n = (b * s) as f64;
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ci in 0..c {
                    let vals = (0..b).flat_map(|bi| (0..s).map(move |si| (bi, si)));
                    mean[ci] = vals.clone().map(|(bi, si)| x[idx(bi, ci, si)]).sum::<f64>() / n;
                    var[ci] = vals.map(|(bi, si)| (x[idx(bi, ci, si)] - mean[ci]).powi(2)).sum::<f64>() / n;
                }
                (mean, var)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (g, bt) = (gamma.data(), beta.data());
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        for (i, (xh, o)) in xhat.iter_mut().zip(out.iter_mut()).enumerate() {
            let ci = (i / s) % c;
            *xh = (x[i] - mean[ci]) * inv_std[ci];
            *o = *xh * g[ci] + bt[ci];
        }
        let op = Op::BatchNorm {
            xhat,
            inv_std,
            batch: b,
            channels: c,
            spatial: s,
            train: stats.is_none(),
        };
        let y = record(op, "batch_norm", &[self, gamma, beta], self.shape.clone(), out)?;
        Ok((y, mean, var))
    }

    /// Normalises each row of `[N, C]` over its `C` entries, then applies a
    /// per-column affine map.
    pub fn layer_norm_rows(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        if self.rank() != 2 || gamma.shape != [self.shape[1]] || beta.shape != [self.shape[1]] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: self.shape.clone(),
                rhs: gamma.shape.clone(),
            });
        }
        let (rows, cols) = (self.shape[0], self.shape[1]);
        let x = self.data();
        let (g, bt) = (gamma.data(), beta.data());
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &x[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            inv_std[r] = 1.0 / (var + eps).sqrt();
            for c in 0..cols {
                let i = r * cols + c;
                xhat[i] = (x[i] - mean) * inv_std[r];
                out[i] = xhat[i] * g[c] + bt[c];
            }
        }
        let op = Op::LayerNorm {
            xhat,
            inv_std,
            rows,
            cols,
        };
        record(op, "layer_norm", &[self, gamma, beta], self.shape.clone(), out)
    }
}
