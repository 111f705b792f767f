use super::{gemm, DenseTensor, Matrix, Shape};
use crate::error::{Error, Result};

/// Working-set bound (in `f64`s) for the Khatri-Rao row block built by
/// [`mttkrp`].
const MTTKRP_BLOCK: usize = 1 << 16;

/// Column-major linear index of every multi-index over `dims`, listed in
/// row-major enumeration order.
fn column_major_offsets(dims: &[usize]) -> Vec<usize> {
    match dims.split_first() {
        None => vec![0],
        Some((&d0, rest)) => {
            let inner = column_major_offsets(rest);
            let mut out = Vec::with_capacity(d0 * inner.len());
            for i0 in 0..d0 {
                out.extend(inner.iter().map(|&r| i0 + d0 * r));
            }
            out
        }
    }
}

/// Maps `(left, right)` block indices to unfolding columns for `mode`.
fn unfolding_columns(dims: &[usize], mode: usize) -> (Vec<usize>, Vec<usize>) {
    let left = column_major_offsets(&dims[..mode]);
    let stride = left.len();
    let right = column_major_offsets(&dims[mode + 1..])
        .into_iter()
        .map(|c| c * stride)
        .collect();
    (left, right)
}

/// Mode-`mode` unfolding `X₍ₙ₎` (`Iₙ × W_n`).
pub fn unfold(t: &DenseTensor, mode: usize) -> Result<Matrix> {
    t.shape().check_mode(mode)?;
    let (left, mid, right) = t.shape().split(mode);
    let cols = left * right;
    let (lcol, rcol) = unfolding_columns(t.dims(), mode);
    let x = t.as_slice();
    let mut out = vec![0.0; mid * cols];
    for l in 0..left {
        for i in 0..mid {
            let src = &x[(l * mid + i) * right..(l * mid + i + 1) * right];
            let row = &mut out[i * cols..(i + 1) * cols];
            for (r, &v) in src.iter().enumerate() {
                row[lcol[l] + rcol[r]] = v;
            }
        }
    }
    Matrix::from_vec(mid, cols, out)
}

/// Inverse of [`unfold`].
pub fn fold(m: &Matrix, mode: usize, shape: &Shape) -> Result<DenseTensor> {
    shape.check_mode(mode)?;
    let (left, mid, right) = shape.split(mode);
    if m.rows() != mid || m.cols() != left * right {
        return Err(Error::DimensionMismatch(format!(
            "cannot fold a {}x{} matrix along mode {mode} into {shape}",
            m.rows(),
            m.cols()
        )));
    }
    let cols = m.cols();
    let (lcol, rcol) = unfolding_columns(shape.dims(), mode);
    let src = m.as_slice();
    let mut out = vec![0.0; shape.numel()];
    for l in 0..left {
        for i in 0..mid {
            let dst = &mut out[(l * mid + i) * right..(l * mid + i + 1) * right];
            let row = &src[i * cols..(i + 1) * cols];
            for (r, v) in dst.iter_mut().enumerate() {
                *v = row[lcol[l] + rcol[r]];
            }
        }
    }
    DenseTensor::new(shape.clone(), out)
}

/// Tensor-times-matrix `𝒳 ×ₙ B`: `𝒴(..j..) = Σᵢ 𝒳(..i..)·B(j,i)`.
pub fn ttm(t: &DenseTensor, b: &Matrix, mode: usize) -> Result<DenseTensor> {
    t.shape().check_mode(mode)?;
    let (left, mid, right) = t.shape().split(mode);
    if b.cols() != mid {
        return Err(Error::DimensionMismatch(format!(
            "TTM along mode {mode}: matrix has {} columns, tensor extent is {mid}",
            b.cols()
        )));
    }
    let rows = b.rows();
    let shape = t.shape().with_extent(mode, rows)?;
    let mut out = vec![0.0; left * rows * right];
    let x = t.as_slice();
    if right == 1 {
        // Y (left × J) = X (left × I) · Bᵀ
        gemm(
            left,
            mid,
            rows,
            1.0,
            (x, mid, 1),
            (b.as_slice(), 1, mid),
            0.0,
            (&mut out, rows, 1),
        );
    } else {
        for l in 0..left {
            gemm(
                rows,
                mid,
                right,
                1.0,
                (b.as_slice(), mid, 1),
                (&x[l * mid * right..(l + 1) * mid * right], right, 1),
                0.0,
                (&mut out[l * rows * right..(l + 1) * rows * right], right, 1),
            );
        }
    }
    DenseTensor::new(shape, out)
}

/// Contracts several distinct modes, in the order given.
pub fn multi_ttm(t: &DenseTensor, pairs: &[(usize, &Matrix)]) -> Result<DenseTensor> {
    let mut seen = vec![false; t.order()];
    for &(mode, _) in pairs {
        t.shape().check_mode(mode)?;
        if std::mem::replace(&mut seen[mode], true) {
            return Err(Error::DuplicateMode(mode));
        }
    }
    let mut cur = t.clone();
    for &(mode, b) in pairs {
        cur = ttm(&cur, b, mode)?;
    }
    Ok(cur)
}

/// Column-wise Kronecker product, folded left to right (the last matrix's
/// row index varies fastest).
pub fn khatri_rao(mats: &[&Matrix]) -> Result<Matrix> {
    let (first, rest) = mats
        .split_first()
        .ok_or_else(|| Error::DimensionMismatch("Khatri-Rao product of no matrices".into()))?;
    let cols = first.cols();
    if let Some(bad) = rest.iter().find(|m| m.cols() != cols) {
        return Err(Error::DimensionMismatch(format!(
            "Khatri-Rao operands need equal column counts ({cols} vs {})",
            bad.cols()
        )));
    }
    let mut acc = (*first).clone();
    for m in rest {
        let rows = acc.rows() * m.rows();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..acc.rows() {
            let a = acc.row(i);
            for k in 0..m.rows() {
                data.extend(a.iter().zip(m.row(k)).map(|(x, y)| x * y));
            }
        }
        acc = Matrix::from_vec(rows, cols, data)?;
    }
    Ok(acc)
}

/// Kronecker product `A ⊗ B`.
pub fn kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    let (k, l) = b.shape();
    Matrix::from_fn(a.rows() * k, a.cols() * l, |r, c| a[(r / k, c / l)] * b[(r % k, c % l)])
}

/// Elementwise product.
pub fn hadamard(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "Hadamard product of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).collect();
    Matrix::from_vec(a.rows(), a.cols(), data)
}

/// Elementwise inner product `⟨𝒳, 𝒴⟩`.
pub fn inner(t1: &DenseTensor, t2: &DenseTensor) -> Result<f64> {
    t1.check_same_shape(t2)?;
    Ok(t1.as_slice().iter().zip(t2.as_slice()).map(|(a, b)| a * b).sum())
}

pub fn frobenius_norm(t: &DenseTensor) -> f64 {
    t.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn mttkrp_rank(t: &DenseTensor, factors: &[Matrix], mode: usize) -> Result<usize> {
    t.shape().check_mode(mode)?;
    if factors.len() != t.order() {
        return Err(Error::DimensionMismatch(format!(
            "{} factors for a tensor of order {}",
            factors.len(),
            t.order()
        )));
    }
    let mut rank = None;
    for (k, f) in factors.iter().enumerate() {
        if k == mode {
            continue;
        }
        if f.rows() != t.dims()[k] {
            return Err(Error::DimensionMismatch(format!(
                "factor {k} has {} rows, tensor extent is {}",
                f.rows(),
                t.dims()[k]
            )));
        }
        match rank {
            None => rank = Some(f.cols()),
            Some(r) if r != f.cols() => {
                return Err(Error::DimensionMismatch(format!(
                    "factor {k} has {} columns, expected {r}",
                    f.cols()
                )))
            }
            _ => {}
        }
    }
    Ok(rank.unwrap_or_else(|| factors[mode].cols()))
}

/// Writes `count` consecutive Khatri-Rao rows, starting at row-major index
/// `start` over the row spaces of `factors`, into `out` (`count × rank`).
fn khatri_rao_rows(factors: &[Matrix], rank: usize, start: usize, count: usize, out: &mut [f64]) {
    let dims: Vec<usize> = factors.iter().map(Matrix::rows).collect();
    let mut digits = vec![0usize; dims.len()];
    let mut rem = start;
    for k in (0..dims.len()).rev() {
        digits[k] = rem % dims[k];
        rem /= dims[k];
    }
    for row in out[..count * rank].chunks_exact_mut(rank) {
        row.fill(1.0);
        for (f, &i) in factors.iter().zip(&digits) {
            for (v, a) in row.iter_mut().zip(f.row(i)) {
                *v *= a;
            }
        }
        for k in (0..dims.len()).rev() {
            digits[k] += 1;
            if digits[k] < dims[k] {
                break;
            }
            digits[k] = 0;
        }
    }
}

/// `Mₙ = X₍ₙ₎·(A_N ⊙ ⋯ ⊙ A_{n+1} ⊙ A_{n−1} ⊙ ⋯ ⊙ A_1)`, the factor at
/// `mode` being ignored.
///
/// The Khatri-Rao product is never formed: its rows are generated in
/// blocks of bounded size and contracted against the tensor in place.
pub fn mttkrp(t: &DenseTensor, factors: &[Matrix], mode: usize) -> Result<Matrix> {
    let rank = mttkrp_rank(t, factors, mode)?;
    let (left, mid, right) = t.shape().split(mode);
    let x = t.as_slice();
    let lower = &factors[..mode];
    let upper = &factors[mode + 1..];
    let mut m = vec![0.0; mid * rank];
    if right > 1 {
        let block = (MTTKRP_BLOCK / rank).clamp(1, right);
        let mut kr = vec![0.0; block * rank];
        let mut kl = vec![1.0; rank];
        let mut tmp = vec![0.0; mid * rank];
        for start in (0..right).step_by(block) {
            let count = block.min(right - start);
            khatri_rao_rows(upper, rank, start, count, &mut kr);
            for l in 0..left {
                khatri_rao_rows(lower, rank, l, 1, &mut kl);
                gemm(
                    mid,
                    count,
                    rank,
                    1.0,
                    (&x[l * mid * right + start..], right, 1),
                    (&kr, rank, 1),
                    0.0,
                    (&mut tmp, rank, 1),
                );
                for (mrow, trow) in m.chunks_exact_mut(rank).zip(tmp.chunks_exact(rank)) {
                    for ((mv, tv), lv) in mrow.iter_mut().zip(trow).zip(&kl) {
                        *mv += tv * lv;
                    }
                }
            }
        }
    } else {
        let block = (MTTKRP_BLOCK / rank).clamp(1, left);
        let mut kl = vec![0.0; block * rank];
        for start in (0..left).step_by(block) {
            let count = block.min(left - start);
            khatri_rao_rows(lower, rank, start, count, &mut kl);
            gemm(
                mid,
                count,
                rank,
                1.0,
                (&x[start * mid..], 1, mid),
                (&kl, rank, 1),
                1.0,
                (&mut m, rank, 1),
            );
        }
    }
    Matrix::from_vec(mid, rank, m)
}

/// Reference MTTKRP that materializes `P⁽ⁿ⁾` and the unfolding.
pub fn mttkrp_materialized(t: &DenseTensor, factors: &[Matrix], mode: usize) -> Result<Matrix> {
    let rank = mttkrp_rank(t, factors, mode)?;
    let others: Vec<&Matrix> = (0..t.order())
        .rev()
        .filter(|&k| k != mode)
        .map(|k| &factors[k])
        .collect();
    let xn = unfold(t, mode)?;
    if others.is_empty() {
        return Ok(Matrix::from_fn(xn.rows(), rank, |i, _| xn[(i, 0)]));
    }
    xn.matmul(&khatri_rao(&others)?)
}
