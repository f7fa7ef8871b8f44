//! Dense `f64` arrays and a reverse-mode differentiation tape.
//!
//! [`Tensor`] is a plain row-major array used for data, parameters and
//! non-recording math. [`Tape`] records operations on [`Var`] handles and
//! replays them backwards to produce gradients.
//!
//! Complex tensors are ordinary tensors whose last axis has length 2
//! (real part, imaginary part).

mod kernels;
mod tape;

pub use kernels::broadcast_shape;
pub use tape::{Gradients, Tape, Var};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("tensor", shape, &[data.len()]));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(f).collect(),
        }
    }

    /// `n x n` identity matrix.
    pub fn eye(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| if i / n == i % n { 1.0 } else { 0.0 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!(
                "item() needs a single element, shape is {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn into_reshape(self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|x| c * x)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        kernels::broadcast_binary("add", self, other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        kernels::broadcast_binary("sub", self, other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        kernels::broadcast_binary("mul", self, other, |a, b| a * b)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        kernels::broadcast_binary("div", self, other, |a, b| a / b)
    }

    /// `(..., m, k) x (k, n) -> (..., m, n)`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        kernels::matmul(self, other)
    }

    /// `(b, m, k) x (b, k, n) -> (b, m, n)`.
    pub fn bmm(&self, other: &Tensor) -> Result<Tensor> {
        kernels::bmm(self, other)
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        kernels::permute(self, perm)
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Tensor> {
        let n = self.ndim();
        if n < 2 {
            return Err(Error::Axis {
                op: "transpose",
                axis: 1,
                rank: n,
            });
        }
        let mut perm: Vec<usize> = (0..n).collect();
        perm.swap(n - 1, n - 2);
        kernels::permute(self, &perm)
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        kernels::slice(self, axis, start, len)
    }

    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        kernels::concat(parts, axis)
    }

    pub fn gather(&self, axis: usize, index: &[usize]) -> Result<Tensor> {
        kernels::gather(self, axis, index)
    }

    pub fn scatter_add(&self, axis: usize, index: &[usize], size: usize) -> Result<Tensor> {
        kernels::scatter_add(self, axis, index, size)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Sum over one axis, keeping it with length 1.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        kernels::sum_axis(self, axis)
    }

    /// Max over one axis, keeping it with length 1.
    pub fn max_axis(&self, axis: usize) -> Result<Tensor> {
        kernels::max_axis(self, axis).map(|(t, _)| t)
    }

    /// Euclidean norm of all entries.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Forward DFT over `axes` of a complex tensor (unnormalized, `e^{-2 pi i x k / s}`).
    pub fn fft(&self, axes: &[usize]) -> Result<Tensor> {
        kernels::fft(self, axes, false)
    }

    /// Inverse DFT over `axes` of a complex tensor, normalized by `1 / prod(s)`.
    pub fn ifft(&self, axes: &[usize]) -> Result<Tensor> {
        kernels::fft(self, axes, true)
    }

    /// Appends a zero imaginary part: `(...)` to `(..., 2)`.
    pub fn to_complex(&self) -> Tensor {
        kernels::complex_from_real(self)
    }

    /// Drops the imaginary part of a complex tensor.
    pub fn real_part(&self) -> Result<Tensor> {
        kernels::complex_part(self, 0)
    }

    pub fn imag_part(&self) -> Result<Tensor> {
        kernels::complex_part(self, 1)
    }

    /// Elementwise complex product with broadcasting over the complex shape.
    pub fn cmul(&self, other: &Tensor) -> Result<Tensor> {
        kernels::cmul(self, other, false)
    }

    pub fn conj(&self) -> Result<Tensor> {
        kernels::conj(self)
    }

    /// Raw little-endian bytes of the data block.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 8);
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(shape: &[usize], bytes: &[u8]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if bytes.len() != n * 8 {
            return Err(Error::Format(format!(
                "expected {} bytes for shape {:?}, found {}",
                n * 8,
                shape,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Tensor::new(shape, data)
    }
}
