//! Kruskal (CP) models and fitness evaluation.
//!
//! `fitness = 1 − ‖𝒳 − 𝒦‖/‖𝒳‖`. The two fast evaluators expand the
//! residual as `‖𝒳‖² − 2⟨𝒳,𝒦⟩ + ‖𝒦‖²` using only quantities a solver
//! already holds after its last mode update:
//!
//! * ALS: `⟨𝒳,𝒦⟩ = ⟨Mₙ, Âₙ⟩`, `‖𝒦‖² = ⟨Γ⁽ⁿ⁾, diag(λ)·Sₙ·diag(λ)⟩`.
//! * QR: `⟨𝒳,𝒦⟩ = ⟨Vₙ, Âₙ·R₀ᵀ⟩`, `‖𝒦‖² = ⟨R₀ᵀR₀, diag(λ)·RₙᵀRₙ·diag(λ)⟩`.
//!
//! The radicand can dip below zero through cancellation near exact fits;
//! it is clamped at zero and the raw value is kept for diagnostics.

use crate::error::{Error, Result};
use crate::tensor::{frobenius_norm, gemm, khatri_rao, DenseTensor, Matrix, Shape};

/// `𝒳 ≈ Σ_r λ_r a_r⁽¹⁾ ∘ ⋯ ∘ a_r⁽ᴺ⁾` with unit-norm factor columns.
#[derive(Debug, Clone, PartialEq)]
pub struct KruskalModel {
    lambda: Vec<f64>,
    factors: Vec<Matrix>,
}

impl KruskalModel {
    pub fn new(lambda: Vec<f64>, factors: Vec<Matrix>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::DimensionMismatch("a model needs at least one factor".into()));
        }
        let rank = lambda.len();
        if rank == 0 {
            return Err(Error::DimensionMismatch("rank must be positive".into()));
        }
        if let Some((k, f)) = factors.iter().enumerate().find(|(_, f)| f.cols() != rank) {
            return Err(Error::DimensionMismatch(format!(
                "factor {k} has {} columns, rank is {rank}",
                f.cols()
            )));
        }
        if let Some(k) = factors.iter().position(|f| f.rows() == 0) {
            return Err(Error::DimensionMismatch(format!("factor {k} has no rows")));
        }
        Ok(Self { lambda, factors })
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn factor(&self, mode: usize) -> &Matrix {
        &self.factors[mode]
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(Matrix::rows).collect()
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<Matrix>) {
        (self.lambda, self.factors)
    }

    /// A model with the same factors and all weights set to zero.
    pub fn zeroed(&self) -> Self {
        Self {
            lambda: vec![0.0; self.rank()],
            factors: self.factors.clone(),
        }
    }

    /// Largest deviation of a factor column norm from 1, ignoring columns
    /// of zero weight.
    pub fn column_norm_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for f in &self.factors {
            for r in 0..self.rank() {
                if self.lambda[r] == 0.0 {
                    continue;
                }
                let n = f.column(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                worst = worst.max((n - 1.0).abs());
            }
        }
        worst
    }
}

/// Dense `𝒦 = Σ_r λ_r a_r⁽¹⁾ ∘ ⋯ ∘ a_r⁽ᴺ⁾`.
pub fn reconstruct(model: &KruskalModel, shape: &Shape) -> Result<DenseTensor> {
    if model.dims() != shape.dims() {
        return Err(Error::DimensionMismatch(format!(
            "model dims {:?} vs shape {shape}",
            model.dims()
        )));
    }
    let rank = model.rank();
    let head = model.factor(0);
    // tail rows in row-major order over modes 2..N, weighted by λ
    let tail = if model.order() > 1 {
        let rest: Vec<&Matrix> = model.factors()[1..].iter().collect();
        let mut kr = khatri_rao(&rest)?;
        for row in kr.as_mut_slice().chunks_exact_mut(rank) {
            for (v, l) in row.iter_mut().zip(model.lambda()) {
                *v *= l;
            }
        }
        kr
    } else {
        Matrix::from_vec(1, rank, model.lambda().to_vec())?
    };
    let cols = tail.rows();
    let mut out = vec![0.0; head.rows() * cols];
    gemm(
        head.rows(),
        rank,
        cols,
        1.0,
        (head.as_slice(), rank, 1),
        (tail.as_slice(), 1, rank),
        0.0,
        (&mut out, cols, 1),
    );
    DenseTensor::new(shape.clone(), out)
}

/// A fitness value and the residual radicand it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fitness {
    pub fitness: f64,
    /// `‖𝒳 − 𝒦‖²` as computed, before clamping.
    pub raw_radicand: f64,
}

fn fitness_from_radicand(norm_x_sq: f64, raw_radicand: f64) -> Fitness {
    Fitness {
        fitness: 1.0 - raw_radicand.max(0.0).sqrt() / norm_x_sq.sqrt(),
        raw_radicand,
    }
}

/// Fitness from an explicit dense residual.
pub fn fitness_direct(x: &DenseTensor, model: &KruskalModel) -> Result<Fitness> {
    let norm_x = frobenius_norm(x);
    if norm_x == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let k = reconstruct(model, x.shape())?;
    let radicand: f64 = x
        .as_slice()
        .iter()
        .zip(k.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(fitness_from_radicand(norm_x * norm_x, radicand))
}

/// `⟨A, diag(λ)·S·diag(λ)⟩`.
fn weighted_gram_inner(a: &Matrix, s: &Matrix, lambda: &[f64]) -> Result<f64> {
    let r = lambda.len();
    if a.shape() != (r, r) || s.shape() != (r, r) {
        return Err(Error::DimensionMismatch(format!(
            "Gram terms must be {r}x{r}, got {:?} and {:?}",
            a.shape(),
            s.shape()
        )));
    }
    let mut acc = 0.0;
    for i in 0..r {
        for j in 0..r {
            acc += a[(i, j)] * lambda[i] * s[(i, j)] * lambda[j];
        }
    }
    Ok(acc)
}

/// Fast ALS fitness from the final mode update of a sweep.
pub fn fitness_fast_als(
    norm_x_sq: f64,
    m_last: &Matrix,
    a_hat_last: &Matrix,
    gamma_last: &Matrix,
    lambda: &[f64],
    s_last: &Matrix,
) -> Result<Fitness> {
    if norm_x_sq <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    let xk = m_last.dot(a_hat_last)?;
    let kk = weighted_gram_inner(gamma_last, s_last, lambda)?;
    Ok(fitness_from_radicand(norm_x_sq, norm_x_sq - 2.0 * xk + kk))
}

/// Fast QR fitness from the final mode update of a sweep.
pub fn fitness_fast_qr(
    norm_x_sq: f64,
    v_n: &Matrix,
    a_hat: &Matrix,
    r0: &Matrix,
    r_n: &Matrix,
    lambda: &[f64],
) -> Result<Fitness> {
    if norm_x_sq <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    let xk = v_n.dot(&a_hat.matmul(&r0.transpose())?)?;
    let kk = weighted_gram_inner(&r0.gram(), &r_n.gram(), lambda)?;
    Ok(fitness_from_radicand(norm_x_sq, norm_x_sq - 2.0 * xk + kk))
}
