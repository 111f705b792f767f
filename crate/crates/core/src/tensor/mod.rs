//! Dense N-mode tensors, matrices and the algebraic kernels the solvers use.
//!
//! Tensors are stored row-major (last index fastest). Unfoldings follow the
//! reversed-Kronecker convention: in `X₍ₙ₎` the column index of element
//! `(i₁..i_N)` is `Σ_{k≠n} iₖ·Jₖ` with `Jₖ = Π_{m<k, m≠n} I_m`, so the lowest
//! remaining mode varies fastest. This matches Khatri-Rao products written
//! as `A_N ⊙ ⋯ ⊙ A_1`.

mod matrix;
mod ops;

pub(crate) use matrix::gemm;
pub use matrix::Matrix;
pub use ops::{
    fold, frobenius_norm, hadamard, inner, khatri_rao, kronecker, mttkrp, mttkrp_materialized, multi_ttm, ttm, unfold,
};

use crate::error::{Error, Result};

/// Mode extents `I₁..I_N` of a tensor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidShape("a tensor needs at least one mode".into()));
        }
        if let Some(k) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidShape(format!("mode {k} has zero extent")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidShape(format!("{dims:?} overflows usize")))?;
        Ok(Self(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn extent(&self, mode: usize) -> usize {
        self.0[mode]
    }

    /// `W_n = Π_{k≠n} Iₖ`.
    pub fn others(&self, mode: usize) -> usize {
        self.numel() / self.0[mode]
    }

    /// Decomposes the flat layout around `mode` as `(left, extent, right)`.
    pub fn split(&self, mode: usize) -> (usize, usize, usize) {
        let left = self.0[..mode].iter().product();
        let right = self.0[mode + 1..].iter().product();
        (left, self.0[mode], right)
    }

    pub fn with_extent(&self, mode: usize, extent: usize) -> Result<Shape> {
        let mut dims = self.0.clone();
        dims[mode] = extent;
        Shape::new(dims)
    }

    pub(crate) fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

/// Dense tensor with row-major `f64` storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for shape {shape} ({} elements)",
                data.len(),
                shape.numel()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_dims(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::new(Shape::new(dims.to_vec())?, data)
    }

    pub fn zeros(shape: Shape) -> Self {
        let data = vec![0.0; shape.numel()];
        Self { shape, data }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        let data = vec![value; shape.numel()];
        Self { shape, data }
    }

    /// Fills the tensor by calling `f` with each multi-index in storage order.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let dims = shape.dims().to_vec();
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(shape.numel());
        for _ in 0..shape.numel() {
            data.push(f(&idx));
            for k in (0..dims.len()).rev() {
                idx[k] += 1;
                if idx[k] < dims[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn order(&self) -> usize {
        self.shape.order()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
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

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.order(), "index arity must match tensor order");
        idx.iter().zip(self.dims()).fold(0, |acc, (&i, &d)| {
            assert!(i < d, "tensor index out of bounds");
            acc * d + i
        })
    }

    pub fn scaled(&self, c: f64) -> DenseTensor {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.check_same_shape(other)?;
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// `self + c·other`.
    pub fn add_scaled(&self, other: &DenseTensor, c: f64) -> Result<DenseTensor> {
        self.check_same_shape(other)?;
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + c * b).collect(),
        })
    }

    /// `‖self − other‖_F / ‖other‖_F`, or the absolute difference when
    /// `other` is zero.
    pub fn relative_diff(&self, other: &DenseTensor) -> Result<f64> {
        let diff = frobenius_norm(&self.sub(other)?);
        let scale = frobenius_norm(other);
        Ok(if scale > 0.0 { diff / scale } else { diff })
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite(i)),
            None => Ok(()),
        }
    }

    pub(crate) fn check_same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::DimensionMismatch(format!(
                "shape {} vs {}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}
