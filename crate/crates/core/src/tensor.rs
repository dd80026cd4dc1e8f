//! Dense row-major `f64` tensors of up to four axes, plus the [`Image2D`]
//! view used for every reconstructed image.

use std::fmt;

use crate::error::{invalid, Error, Result};

/// Default cap on the element count of a single tensor (2^28).
pub const MAX_ELEMENTS: usize = 1 << 28;

/// Maximum number of axes (batch, channel, height, width).
pub const MAX_AXES: usize = 4;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.dims)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

fn check_dims(dims: &[usize], max: usize) -> Result<usize> {
    if dims.is_empty() || dims.len() > MAX_AXES {
        return Err(invalid(format!(
            "tensor must have 1..={MAX_AXES} axes, got {}",
            dims.len()
        )));
    }
    if let Some(axis) = dims.iter().position(|&d| d == 0) {
        return Err(invalid(format!("axis {axis} has zero length")));
    }
    let requested: u128 = dims.iter().map(|&d| d as u128).product();
    if requested > max as u128 {
        return Err(Error::DimensionOverflow { requested, max });
    }
    Ok(requested as usize)
}

impl Tensor {
    /// Tensor of the given shape with every element set to `fill`.
    pub fn new(dims: &[usize], fill: f64) -> Result<Self> {
        Self::new_with_limit(dims, fill, MAX_ELEMENTS)
    }

    pub fn new_with_limit(dims: &[usize], fill: f64, max_elements: usize) -> Result<Self> {
        let len = check_dims(dims, max_elements)?;
        if !fill.is_finite() {
            return Err(Error::NonFinite("tensor fill"));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![fill; len],
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::new(dims, 0.0)
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = check_dims(dims, MAX_ELEMENTS)?;
        if len != data.len() {
            return Err(invalid(format!(
                "shape {dims:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor construction"));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Unchecked constructor for internal buffers whose length is known to
    /// match and whose values may be non-finite (diagnosed later).
    pub(crate) fn from_parts(dims: &[usize], data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Self {
            dims: dims.to_vec(),
            data,
        }
    }

    /// A one-element tensor of shape `[1]`.
    pub fn scalar(value: f64) -> Self {
        Self {
            dims: vec![1],
            data: vec![value],
        }
    }

    /// Rank-1 tensor wrapping `data`.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::from_vec(&[n], data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let len = check_dims(dims, usize::MAX)?;
        if len != self.data.len() {
            return Err(Error::ShapeMismatch {
                expected: self.dims,
                actual: dims.to_vec(),
            });
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    pub fn ensure_shape(&self, dims: &[usize]) -> Result<()> {
        if self.dims != dims {
            return Err(Error::ShapeMismatch {
                expected: dims.to_vec(),
                actual: self.dims.clone(),
            });
        }
        Ok(())
    }

    fn ensure_same(&self, other: &Tensor) -> Result<()> {
        other.ensure_shape(&self.dims)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.ensure_same(other)?;
        Ok(Tensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `alpha * x + y`, element-wise.
    pub fn axpy(alpha: f64, x: &Tensor, y: &Tensor) -> Result<Tensor> {
        let out = x.zip_map(y, |xi, yi| alpha * xi + yi)?;
        out.check_finite("axpy")?;
        Ok(out)
    }

    /// Compensated (Neumaier) inner product.
    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.ensure_same(other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sum(&self) -> f64 {
        kahan_sum(self.data.iter().copied())
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }
}

/// Neumaier-compensated dot product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    kahan_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

pub(crate) fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Plain (uncompensated) dot product for hot loops.
#[inline]
pub(crate) fn dot_fast(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A single-channel image: a tensor of shape `[height, width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image2D(Tensor);

impl Image2D {
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Ok(Self(Tensor::zeros(&[height, width])?))
    }

    pub fn from_vec(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        Ok(Self(Tensor::from_vec(&[height, width], values)?))
    }

    /// Accepts `[H, W]`, `[1, H, W]` or `[1, 1, H, W]` tensors.
    pub fn from_tensor(t: Tensor) -> Result<Self> {
        let dims = t.dims().to_vec();
        let (h, w) = match dims.as_slice() {
            [h, w] => (*h, *w),
            [1, h, w] | [1, 1, h, w] => (*h, *w),
            _ => return Err(invalid(format!("cannot view shape {dims:?} as an image"))),
        };
        Ok(Self(t.reshape(&[h, w])?))
    }

    pub fn height(&self) -> usize {
        self.0.dims()[0]
    }

    pub fn width(&self) -> usize {
        self.0.dims()[1]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0.as_slice()[row * self.width() + col]
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.0.as_mut_slice()
    }
}
