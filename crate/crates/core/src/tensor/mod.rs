//! Dense row-major tensors with a reverse-mode tape.
//!
//! A [`Tensor`] is an immutable value plus an optional handle into a [`Tape`].
//! Operations on untracked tensors are plain forward computation; as soon as
//! one input is tracked, the result is recorded on that input's tape.
//!
//! Broadcasting is limited to equal shapes and one-element-vs-tensor.

mod gradcheck;
mod io;
mod kernels;
mod ops;
mod tape;

use std::fmt;
use std::rc::Rc;

use crate::{Error, Result};

pub use gradcheck::{analytic_gradient, grad_check, numeric_gradient, GradCheckReport};
pub use io::{read_dimt, read_dimt_file, write_dimt, write_dimt_file};
pub use kernels::Padding;
pub use ops::ReduceKind;
pub use tape::Tape;

pub(crate) use tape::NodeRef;

/// Element type. Storage is always `f64`; `F32` tensors have every forward
/// result rounded to single precision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<DType> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "float32",
            DType::F64 => "float64",
        }
    }

    pub(crate) fn promote(self, other: DType) -> DType {
        if self == DType::F64 || other == DType::F64 {
            DType::F64
        } else {
            DType::F32
        }
    }

    pub(crate) fn round(self, data: &mut [f64]) {
        if self == DType::F32 {
            for v in data {
                *v = *v as f32 as f64;
            }
        }
    }
}

impl std::str::FromStr for DType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "float32" | "f32" => Ok(DType::F32),
            "float64" | "f64" => Ok(DType::F64),
            other => Err(Error::invalid(format!("unknown dtype {other:?}"))),
        }
    }
}

#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    dtype: DType,
    data: Rc<Vec<f64>>,
    node: Option<NodeRef>,
}

impl Tensor {
    /// Builds a float64 tensor, checking that the buffer matches the shape.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: "extents must be positive".into(),
            });
        }
        if numel != data.len() {
            return Err(Error::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("buffer holds {} scalars", data.len()),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            dtype: DType::F64,
            data: Rc::new(data),
            node: None,
        })
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor {
            shape: Vec::new(),
            dtype: DType::F64,
            data: Rc::new(vec![v]),
            node: None,
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Result<Tensor> {
        Tensor::new(shape, vec![v; shape.iter().product()])
    }

    pub fn zeros(shape: &[usize]) -> Result<Tensor> {
        Tensor::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Result<Tensor> {
        Tensor::full(shape, 1.0)
    }

    /// Row vector `[n]` or matrix from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Tensor> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::invalid("ragged rows"));
        }
        Tensor::new(&[r, c], rows.concat())
    }

    pub fn eye(n: usize) -> Result<Tensor> {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            d[i * n + i] = 1.0;
        }
        Tensor::new(&[n, n], d)
    }

    /// Casts to `dtype`, rounding when narrowing. The result is untracked.
    pub fn to_dtype(&self, dtype: DType) -> Tensor {
        let mut data = (*self.data).clone();
        dtype.round(&mut data);
        Tensor {
            shape: self.shape.clone(),
            dtype,
            data: Rc::new(data),
            node: None,
        }
    }

    pub(crate) fn from_parts(shape: Vec<usize>, dtype: DType, data: Vec<f64>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            dtype,
            data: Rc::new(data),
            node: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (*self.data).clone()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: "expected a single element".into(),
            });
        }
        Ok(self.data[0])
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    pub fn tape(&self) -> Option<Tape> {
        self.node.as_ref().map(|n| n.tape.clone())
    }

    /// Same value, no tape history.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            dtype: self.dtype,
            data: Rc::clone(&self.data),
            node: None,
        }
    }

    /// Registers this tensor as a leaf on `tape`, replacing any previous
    /// tape handle.
    pub fn attach(&mut self, tape: &Tape) {
        self.node = None;
        *self = tape.leaf(self);
    }

    /// Drops the tape handle in place.
    pub fn release(&mut self) {
        self.node = None;
    }

    /// Mutable access to the buffer. Drops the tape handle, since the
    /// recorded value would no longer match.
    pub fn data_mut(&mut self) -> &mut [f64] {
        self.node = None;
        Rc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bitwise equality of shape, dtype and values.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self.dtype == other.dtype
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.shape).field("dtype", &self.dtype);
        if self.numel() <= 16 {
            s.field("data", &self.data);
        }
        s.field("tracked", &self.is_tracked()).finish()
    }
}
