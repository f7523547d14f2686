//! Raw numeric kernels shared by forward and backward passes.

use crate::{Error, Result};

/// `c (+)= op(a) · op(b)` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
    accumulate: bool,
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].fill(0.0);
        }
        return;
    }
    let a_last = (m - 1) * a_strides.0 + (k - 1) * a_strides.1;
    let b_last = (k - 1) * b_strides.0 + (n - 1) * b_strides.1;
    assert!(a_last < a.len() && b_last < b.len());
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Spatial padding rule for [`crate::Tensor::conv2d`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// No padding.
    Valid,
    /// Output extent `ceil(in / stride)`, padding split with the extra row
    /// or column at the bottom/right.
    Same,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub oh: usize,
    pub ow: usize,
}

fn out_extent(extent: usize, k: usize, stride: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Valid => (k <= extent).then(|| ((extent - k) / stride + 1, 0)),
        Padding::Same => {
            let out = extent.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(extent);
            (k <= extent + total).then_some((out, total / 2))
        }
    }
}

impl ConvGeom {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, padding: Padding) -> Result<Self> {
        if input.len() != 4 || kernel.len() != 4 {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: input.to_vec(),
                rhs: kernel.to_vec(),
            });
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be positive"));
        }
        let [batch, c_in, h, w] = [input[0], input[1], input[2], input[3]];
        let [c_out, kc, kh, kw] = [kernel[0], kernel[1], kernel[2], kernel[3]];
        if kc != c_in {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: input.to_vec(),
                rhs: kernel.to_vec(),
            });
        }
        let too_big = || Error::InvalidShape {
            shape: kernel.to_vec(),
            reason: format!("kernel larger than padded {h}x{w} input"),
        };
        let (oh, pad_top) = out_extent(h, kh, stride, padding).ok_or_else(too_big)?;
        let (ow, pad_left) = out_extent(w, kw, stride, padding).ok_or_else(too_big)?;
        Ok(ConvGeom {
            batch,
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
            pad_top,
            pad_left,
            oh,
            ow,
        })
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.batch, self.c_out, self.oh, self.ow]
    }

    /// Input pixel feeding output `(oy, ox)` through kernel offset
    /// `(ky, kx)`, if it lies inside the unpadded image.
    #[inline]
    fn source(&self, ky: usize, kx: usize, oy: usize, ox: usize) -> Option<usize> {
        let iy = (oy * self.stride + ky).checked_sub(self.pad_top).filter(|&v| v < self.h)?;
        let ix = (ox * self.stride + kx).checked_sub(self.pad_left).filter(|&v| v < self.w)?;
        Some(iy * self.w + ix)
    }

    /// Copies the input seen by kernel offset `(ky, kx)` for one sample into
    /// `buf` as `[c_in, oh·ow]`, zero where the offset lands in padding.
    fn gather_window(&self, input: &[f64], ky: usize, kx: usize, buf: &mut [f64]) {
        let p = self.oh * self.ow;
        for ci in 0..self.c_in {
            let plane = &input[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            let row = &mut buf[ci * p..(ci + 1) * p];
            for oy in 0..self.oh {
                for ox in 0..self.ow {
                    row[oy * self.ow + ox] = self.source(ky, kx, oy, ox).map_or(0.0, |i| plane[i]);
                }
            }
        }
    }

    /// Adds `buf` (`[c_in, oh·ow]`) back onto the input pixels it was
    /// gathered from.
    fn scatter_window(&self, buf: &[f64], ky: usize, kx: usize, grad: &mut [f64]) {
        let p = self.oh * self.ow;
        for ci in 0..self.c_in {
            let plane = &mut grad[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            let row = &buf[ci * p..(ci + 1) * p];
            for oy in 0..self.oh {
                for ox in 0..self.ow {
                    if let Some(i) = self.source(ky, kx, oy, ox) {
                        plane[i] += row[oy * self.ow + ox];
                    }
                }
            }
        }
    }

    /// Kernel slice for offset `(ky, kx)` as a `[c_out, c_in]` matrix view:
    /// `(offset, row stride, column stride)`.
    fn tap(&self, ky: usize, kx: usize) -> (usize, (usize, usize)) {
        let khw = self.kh * self.kw;
        (ky * self.kw + kx, (self.c_in * khw, khw))
    }

    fn in_len(&self) -> usize {
        self.c_in * self.h * self.w
    }

    fn out_len(&self) -> usize {
        self.c_out * self.oh * self.ow
    }

    /// Each kernel offset contributes `W[:, :, ky, kx] · window(ky, kx)` to
    /// every sample's output.
    pub fn forward(&self, input: &[f64], kernel: &[f64]) -> Vec<f64> {
        let p = self.oh * self.ow;
        let mut out = vec![0.0; self.batch * self.out_len()];
        let mut buf = vec![0.0; self.c_in * p];
        for b in 0..self.batch {
            let x = &input[b * self.in_len()..(b + 1) * self.in_len()];
            let y = &mut out[b * self.out_len()..(b + 1) * self.out_len()];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    self.gather_window(x, ky, kx, &mut buf);
                    let (off, strides) = self.tap(ky, kx);
                    gemm(self.c_out, self.c_in, p, &kernel[off..], strides, &buf, (p, 1), y, true);
                }
            }
        }
        out
    }

    pub fn grad_input(&self, kernel: &[f64], g: &[f64]) -> Vec<f64> {
        let p = self.oh * self.ow;
        let mut gi = vec![0.0; self.batch * self.in_len()];
        let mut buf = vec![0.0; self.c_in * p];
        for b in 0..self.batch {
            let gy = &g[b * self.out_len()..(b + 1) * self.out_len()];
            let gx = &mut gi[b * self.in_len()..(b + 1) * self.in_len()];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let (off, (rs, cs)) = self.tap(ky, kx);
                    // Wᵀ · g: transpose the kernel view by swapping strides.
                    gemm(self.c_in, self.c_out, p, &kernel[off..], (cs, rs), gy, (p, 1), &mut buf, false);
                    self.scatter_window(&buf, ky, kx, gx);
                }
            }
        }
        gi
    }

    pub fn grad_kernel(&self, input: &[f64], g: &[f64]) -> Vec<f64> {
        let p = self.oh * self.ow;
        let khw = self.kh * self.kw;
        let mut gk = vec![0.0; self.c_out * self.c_in * khw];
        let mut buf = vec![0.0; self.c_in * p];
        let mut tap = vec![0.0; self.c_out * self.c_in];
        for ky in 0..self.kh {
            for kx in 0..self.kw {
                tap.fill(0.0);
                for b in 0..self.batch {
                    let x = &input[b * self.in_len()..(b + 1) * self.in_len()];
                    let gy = &g[b * self.out_len()..(b + 1) * self.out_len()];
                    self.gather_window(x, ky, kx, &mut buf);
                    // g · windowᵀ
                    gemm(self.c_out, p, self.c_in, gy, (p, 1), &buf, (1, p), &mut tap, true);
                }
                let (off, _) = self.tap(ky, kx);
                for (i, v) in tap.iter().enumerate() {
                    gk[i * khw + off] += v;
                }
            }
        }
        gk
    }
}

/// Numerically stable `ln(1 + e^z)`.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Splits `shape` around `axis` into (outer, axis length, inner).
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

/// For each output position of `shape` permuted by `axes`, the flat index in
/// the unpermuted buffer.
pub(crate) fn permute_map(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let step: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let numel: usize = shape.iter().product();
    let mut map = Vec::with_capacity(numel);
    let mut coord = vec![0usize; shape.len()];
    let mut idx = 0usize;
    for _ in 0..numel {
        map.push(idx);
        for d in (0..coord.len()).rev() {
            coord[d] += 1;
            idx += step[d];
            if coord[d] < out_shape[d] {
                break;
            }
            idx -= step[d] * coord[d];
            coord[d] = 0;
        }
    }
    map
}
