//! Dense row-major tensors.
//!
//! A [`Tensor`] is a flat buffer plus a shape. There are no views or strides:
//! reshaping and transposing copy. Every operation that produces new values
//! checks them for NaN/Inf and reports [`TensorError::NonFinite`] instead of
//! letting a non-finite value escape.

use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("shape {0:?} is invalid: every tensor needs at least one dimension and no zero-sized dimension")]
    InvalidShape(Vec<usize>),
    #[error("data length {actual} does not match shape {shape:?} (expected {expected})")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got rank {actual}")]
    Rank {
        op: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("standard deviation must be non-negative, got {0}")]
    NegativeStd(f64),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Floating-point element type. `f32` is the working precision, `f64` is used
/// by the gradient-check suites.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    /// `c ← a·b + beta·c` for row/column-strided operands.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
    );

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

fn check_span(len: usize, rows: usize, cols: usize, strides: (isize, isize)) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) as isize * strides.0 + (cols - 1) as isize * strides.1;
    assert!(
        strides.0 >= 0 && strides.1 >= 0 && (last as usize) < len,
        "gemm operand out of bounds"
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
            ) {
                check_span(a.len(), m, k, a_strides);
                check_span(b.len(), k, n, b_strides);
                assert!(c.len() >= m * n, "gemm output too small");
                // SAFETY: every index touched by the kernel was bounds-checked above,
                // and `c` is a distinct mutable borrow laid out densely as [m, n].
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
    Max,
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?} ", self.shape)?;
        let head = &self.data[..self.data.len().min(PREVIEW)];
        if self.data.len() > PREVIEW {
            write!(f, "{head:?}...")
        } else {
            write!(f, "{head:?}")
        }
    }
}

fn validate_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::InvalidShape(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

pub(crate) fn ensure_finite<T: Scalar>(data: &[T], op: &'static str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let expected = validate_shape(shape)?;
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                shape: shape.to_vec(),
                expected,
                actual: data.len(),
            });
        }
        ensure_finite(&data, "new")?;
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let len = validate_shape(shape)?;
        Self::new(shape, vec![value; len])
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            shape: other.shape.clone(),
            data: vec![T::zero(); other.data.len()],
        }
    }

    /// Builds a tensor from parts that the caller already knows are consistent.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    /// Draws every element independently from `Normal(mean, std²)`.
    pub fn sample_normal(rng: &mut Rng, shape: &[usize], mean: f64, std: f64) -> Result<Self> {
        if std.is_nan() || std < 0.0 {
            return Err(TensorError::NegativeStd(std));
        }
        let len = validate_shape(shape)?;
        let data = (0..len)
            .map(|_| T::from_f64_lossy(rng.normal(mean, std)))
            .collect();
        Self::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let expected = validate_shape(shape)?;
        if expected != self.data.len() {
            return Err(TensorError::LengthMismatch {
                shape: shape.to_vec(),
                expected,
                actual: self.data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let data: Vec<T> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        ensure_finite(&data, op)?;
        Ok(Self::from_parts(self.shape.clone(), data))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, factor: T) -> Result<Self> {
        self.map(|v| v * factor)
    }

    pub fn add_scalar(&self, value: T) -> Result<Self> {
        self.map(|v| v + value)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        let data: Vec<T> = self.data.iter().map(|&v| f(v)).collect();
        ensure_finite(&data, "map")?;
        Ok(Self::from_parts(self.shape.clone(), data))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        for t in [self, other] {
            if t.rank() != 2 {
                return Err(TensorError::Rank {
                    op: "matmul",
                    expected: 2,
                    actual: t.rank(),
                });
            }
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            &self.data,
            (k as isize, 1),
            &other.data,
            (n as isize, 1),
            T::zero(),
            &mut out,
        );
        ensure_finite(&out, "matmul")?;
        Ok(Self::from_parts(vec![m, n], out))
    }

    pub fn transpose2d(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(TensorError::Rank {
                op: "transpose2d",
                expected: 2,
                actual: self.rank(),
            });
        }
        let (rows, cols) = (self.shape[0], self.shape[1]);
        let mut data = vec![T::zero(); self.data.len()];
        for r in 0..rows {
            for c in 0..cols {
                data[c * rows + r] = self.data[r * cols + c];
            }
        }
        Ok(Self::from_parts(vec![cols, rows], data))
    }

    /// Reduces over `axis`, or over every element when `axis` is `None`
    /// (yielding shape `[1]`). The reduced axis is removed; a rank-1 input
    /// reduced along axis 0 becomes shape `[1]`.
    pub fn reduce(&self, op: Reduction, axis: Option<usize>) -> Result<Self> {
        let Some(axis) = axis else {
            let v = reduce_slice(op, self.data.iter().copied(), self.data.len());
            return Self::new(&[1], vec![v]);
        };
        if axis >= self.rank() {
            return Err(TensorError::AxisOutOfRange {
                axis,
                rank: self.rank(),
            });
        }
        let (outer, extent, inner) = self.split_axis(axis);
        let mut data = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let lane = (0..extent).map(|e| self.data[(o * extent + e) * inner + i]);
                data.push(reduce_slice(op, lane, extent));
            }
        }
        let mut shape: Vec<usize> = self.shape.clone();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        ensure_finite(&data, "reduce")?;
        Ok(Self::from_parts(shape, data))
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Index of the largest element over the flattened tensor. Ties resolve to
    /// the lowest index.
    pub fn argmax(&self) -> usize {
        argmax_slice(&self.data)
    }

    /// Per-lane argmax along `axis`, in row-major order of the remaining axes.
    pub fn argmax_axis(&self, axis: usize) -> Result<Vec<usize>> {
        if axis >= self.rank() {
            return Err(TensorError::AxisOutOfRange {
                axis,
                rank: self.rank(),
            });
        }
        let (outer, extent, inner) = self.split_axis(axis);
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = 0;
                for e in 1..extent {
                    if self.data[(o * extent + e) * inner + i]
                        > self.data[(o * extent + best) * inner + i]
                    {
                        best = e;
                    }
                }
                out.push(best);
            }
        }
        Ok(out)
    }

    fn split_axis(&self, axis: usize) -> (usize, usize, usize) {
        let outer = self.shape[..axis].iter().product();
        let inner = self.shape[axis + 1..].iter().product();
        (outer, self.shape[axis], inner)
    }
}

fn reduce_slice<T: Scalar>(op: Reduction, values: impl Iterator<Item = T>, count: usize) -> T {
    match op {
        Reduction::Sum => values.sum(),
        Reduction::Mean => values.sum::<T>() / T::from_usize(count).unwrap(),
        Reduction::Max => values.fold(T::neg_infinity(), T::max),
    }
}

pub(crate) fn argmax_slice<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
