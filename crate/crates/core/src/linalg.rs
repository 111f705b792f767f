//! Small dense factorizations used by the ALS subproblems.
//!
//! QR is unpivoted Householder with signs fixed so that `diag(R) ≥ 0`; the
//! output is a deterministic function of the input bits. The extrapolation
//! step pairs `Q0` matrices from consecutive sweeps, so it depends on that
//! sign convention.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Compact QR factorization `A = Q·R` with `k = min(m, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QrPair {
    /// `m × k`, orthonormal columns.
    pub q: Matrix,
    /// `k × n`, upper triangular (trapezoidal when `m < n`) with nonnegative
    /// diagonal.
    pub r: Matrix,
    /// Columns whose Householder pivot vanished (numerical rank deficiency).
    pub deficient_columns: Vec<usize>,
}

/// Householder thin QR.
pub fn thin_qr(a: &Matrix) -> QrPair {
    let (m, n) = a.shape();
    let k = m.min(n);
    let mut w = a.as_slice().to_vec();
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut deficient = Vec::new();
    let scale = a.frobenius_norm();

    for j in 0..k {
        let norm = (j..m).map(|i| w[i * n + j] * w[i * n + j]).sum::<f64>().sqrt();
        if norm <= 100.0 * f64::EPSILON * scale {
            deficient.push(j);
        }
        if norm == 0.0 {
            vs.push(Vec::new());
            continue;
        }
        let x0 = w[j * n + j];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..m).map(|i| w[i * n + j]).collect();
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= vnorm);
        for c in j..n {
            let s: f64 = v.iter().enumerate().map(|(t, vi)| vi * w[(j + t) * n + c]).sum();
            if s != 0.0 {
                for (t, vi) in v.iter().enumerate() {
                    w[(j + t) * n + c] -= 2.0 * s * vi;
                }
            }
        }
        // the column below the diagonal is annihilated exactly
        for i in j + 1..m {
            w[i * n + j] = 0.0;
        }
        vs.push(v);
    }

    let mut r = Matrix::from_fn(k, n, |i, c| if c >= i { w[i * n + c] } else { 0.0 });

    // Q = H₀ H₁ ⋯ H_{k−1} applied to the first k columns of the identity.
    let mut q = vec![0.0; m * k];
    for i in 0..k {
        q[i * k + i] = 1.0;
    }
    for (j, v) in vs.iter().enumerate().rev() {
        if v.is_empty() {
            continue;
        }
        for c in 0..k {
            let s: f64 = v.iter().enumerate().map(|(t, vi)| vi * q[(j + t) * k + c]).sum();
            if s != 0.0 {
                for (t, vi) in v.iter().enumerate() {
                    q[(j + t) * k + c] -= 2.0 * s * vi;
                }
            }
        }
    }

    for i in 0..k {
        if r[(i, i)] < 0.0 {
            for c in i..n {
                r[(i, c)] = -r[(i, c)];
            }
            for row in 0..m {
                q[row * k + i] = -q[row * k + i];
            }
        }
    }

    QrPair {
        q: Matrix::from_vec(m, k, q).expect("q has m*k entries"),
        r,
        deficient_columns: deficient,
    }
}

/// Solution of an SPD system together with whether the ridge fallback fired.
#[derive(Debug, Clone)]
pub struct SpdSolution {
    pub x: Matrix,
    pub regularized: bool,
}

pub(crate) fn cholesky(g: &Matrix) -> Option<Matrix> {
    let n = g.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = g[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if !d.is_finite() || d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = g[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Solves `X·G = RHS` for symmetric positive (semi)definite `G`.
///
/// Cholesky is attempted first; on a non-positive pivot it is retried once
/// on `G + δI` with `δ = 1e-12·trace(G)/R`.
pub fn solve_spd(g: &Matrix, rhs: &Matrix) -> Result<SpdSolution> {
    let n = g.rows();
    if g.cols() != n || rhs.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "solve_spd: G is {}x{}, RHS has {} columns",
            g.rows(),
            g.cols(),
            rhs.cols()
        )));
    }
    let asym = g.sub(&g.transpose())?.max_abs();
    let scale = g.max_abs();
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym / scale));
    }

    let (l, regularized) = match cholesky(g) {
        Some(l) => (l, false),
        None => {
            let delta = 1e-12 * g.trace() / n as f64;
            let mut ridge = g.clone();
            for i in 0..n {
                ridge[(i, i)] += delta;
            }
            match cholesky(&ridge) {
                Some(l) => (l, true),
                None => {
                    let diag: Vec<f64> = (0..n).map(|i| g[(i, i)]).collect();
                    let max = diag.iter().cloned().fold(f64::MIN, f64::max);
                    let min = diag.iter().cloned().fold(f64::MAX, f64::min);
                    return Err(Error::Singular(format!(
                        "Cholesky failed after ridge δ = {delta:e}; diagonal range [{min:e}, {max:e}]"
                    )));
                }
            }
        }
    };

    // G·xᵀ = bᵀ for every row b: forward with L, back with Lᵀ.
    let mut x = Matrix::zeros(rhs.rows(), n);
    let mut y = vec![0.0; n];
    for row in 0..rhs.rows() {
        let b = rhs.row(row);
        for i in 0..n {
            let mut s = b[i];
            for p in 0..i {
                s -= l[(i, p)] * y[p];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in i + 1..n {
                s -= l[(p, i)] * x[(row, p)];
            }
            x[(row, i)] = s / l[(i, i)];
        }
    }
    Ok(SpdSolution { x, regularized })
}

/// Solves `X·L = RHS` row by row for lower-triangular `L`.
///
/// Fails when some `|L(i,i)| ≤ 1e-14·maxᵢ|L(i,i)|`.
pub fn solve_rows_lower_triangular(l: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    let n = l.rows();
    if l.cols() != n || rhs.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "triangular solve: L is {}x{}, RHS has {} columns",
            l.rows(),
            l.cols(),
            rhs.cols()
        )));
    }
    let max_diag = (0..n).map(|i| l[(i, i)].abs()).fold(0.0, f64::max);
    let threshold = 1e-14 * max_diag;
    for i in 0..n {
        let d = l[(i, i)].abs();
        if d <= threshold || max_diag == 0.0 {
            return Err(Error::SingularTriangular {
                column: i,
                value: d,
                threshold,
            });
        }
    }
    let mut x = Matrix::zeros(rhs.rows(), n);
    for row in 0..rhs.rows() {
        let b = rhs.row(row);
        for j in (0..n).rev() {
            let mut s = b[j];
            for i in j + 1..n {
                s -= x[(row, i)] * l[(i, j)];
            }
            x[(row, j)] = s / l[(j, j)];
        }
    }
    Ok(x)
}

/// Scales every column to unit Euclidean norm and returns the norms.
///
/// Columns with norm below `1e-300` become `e₁` with weight 0.
pub fn normalize_columns(a: &Matrix) -> (Matrix, Vec<f64>) {
    let (m, n) = a.shape();
    let weights: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt())
        .collect();
    let out = Matrix::from_fn(m, n, |i, j| {
        if weights[j] < 1e-300 {
            if i == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            a[(i, j)] / weights[j]
        }
    });
    let weights = weights.into_iter().map(|w| if w < 1e-300 { 0.0 } else { w }).collect();
    (out, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::khatri_rao;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn check_qr(a: &Matrix, qr: &QrPair, tol: f64) {
        let k = a.rows().min(a.cols());
        assert_eq!(qr.q.shape(), (a.rows(), k));
        assert_eq!(qr.r.shape(), (k, a.cols()));
        let qtq = qr.q.gram();
        assert!(qtq.sub(&Matrix::identity(k)).unwrap().max_abs() <= tol);
        let recon = qr.q.matmul(&qr.r).unwrap();
        assert!(recon.sub(a).unwrap().frobenius_norm() <= tol * a.frobenius_norm().max(1.0));
        for i in 0..k {
            assert!(qr.r[(i, i)] >= 0.0);
            for j in 0..i.min(a.cols()) {
                assert_eq!(qr.r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn qr_of_identity() {
        let qr = thin_qr(&Matrix::identity(4));
        assert_eq!(qr.q, Matrix::identity(4));
        assert_eq!(qr.r, Matrix::identity(4));
        assert!(qr.deficient_columns.is_empty());
    }

    #[test]
    fn qr_hand_example() {
        let qr = thin_qr(&Matrix::from_rows(&[[3.0], [4.0]]).unwrap());
        assert!((qr.q[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((qr.q[(1, 0)] - 0.8).abs() < 1e-15);
        assert!((qr.r[(0, 0)] - 5.0).abs() < 1e-15);
    }

    #[test]
    fn qr_random_tall() {
        let a = rand_matrix(20, 5, 1);
        check_qr(&a, &thin_qr(&a), 1e-12);
    }

    #[test]
    fn qr_wide_and_deficient() {
        let a = rand_matrix(3, 5, 2);
        check_qr(&a, &thin_qr(&a), 1e-12);
        let mut z = rand_matrix(6, 3, 3);
        for i in 0..6 {
            z[(i, 1)] = 0.0;
            z[(i, 2)] = 0.0;
        }
        let qr = thin_qr(&z);
        assert!(qr.deficient_columns.contains(&1));
        assert!(qr.q.matmul(&qr.r).unwrap().sub(&z).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn qr_is_deterministic() {
        let a = rand_matrix(30, 7, 4);
        let (x, y) = (thin_qr(&a), thin_qr(&a));
        assert_eq!(x.q.as_slice(), y.q.as_slice());
        assert_eq!(x.r.as_slice(), y.r.as_slice());
    }

    #[test]
    fn q0_structure_for_triangular_khatri_rao() {
        for seed in 0..10 {
            let rs: Vec<Matrix> = (0..3)
                .map(|k| thin_qr(&rand_matrix(6 + k, 4, 100 + seed * 3 + k as u64)).r)
                .collect();
            let z = khatri_rao(&[&rs[2], &rs[1], &rs[0]]).unwrap();
            let q0 = thin_qr(&z).q;
            assert!((q0[(0, 0)] - 1.0).abs() <= 1e-12);
            for j in 1..q0.cols() {
                assert!(q0[(0, j)].abs() <= 1e-12);
            }
            for i in 1..q0.rows() {
                assert!(q0[(i, 0)].abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn spd_examples() {
        let rhs = rand_matrix(4, 3, 5);
        let s = solve_spd(&Matrix::identity(3), &rhs).unwrap();
        assert!(!s.regularized);
        assert!(s.x.sub(&rhs).unwrap().max_abs() < 1e-15);

        let g = Matrix::from_rows(&[[2.0, 0.0], [0.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[[2.0, 4.0]]).unwrap();
        let x = solve_spd(&g, &b).unwrap().x;
        assert!(x.sub(&Matrix::filled(1, 2, 1.0)).unwrap().max_abs() <= 1e-15);

        let f = rand_matrix(12, 5, 6);
        let g = f.gram();
        let rhs = rand_matrix(7, 5, 7);
        let x = solve_spd(&g, &rhs).unwrap().x;
        let res = x.matmul(&g).unwrap().sub(&rhs).unwrap().frobenius_norm();
        assert!(res <= 1e-10 * rhs.frobenius_norm());
    }

    #[test]
    fn spd_ridge_and_failure() {
        // rank-deficient PSD: Cholesky hits a zero pivot, ridge rescues it
        let v = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let g = v.gram();
        let s = solve_spd(&g, &Matrix::from_rows(&[[1.0, 1.0]]).unwrap()).unwrap();
        assert!(s.regularized);

        let neg = Matrix::from_rows(&[[-1.0, 0.0], [0.0, -1.0]]).unwrap();
        assert!(matches!(solve_spd(&neg, &Matrix::zeros(1, 2)), Err(Error::Singular(_))));
        let asym = Matrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]).unwrap();
        assert!(matches!(
            solve_spd(&asym, &Matrix::zeros(1, 2)),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn lower_triangular_examples() {
        let rhs = rand_matrix(3, 4, 8);
        let x = solve_rows_lower_triangular(&Matrix::identity(4), &rhs).unwrap();
        assert_eq!(x, rhs);

        let l = Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap();
        let x = solve_rows_lower_triangular(&l, &Matrix::from_rows(&[[1.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(x.as_slice(), &[0.0, 1.0]);

        let sing = Matrix::from_rows(&[[1.0, 0.0], [1.0, 1e-20]]).unwrap();
        assert!(matches!(
            solve_rows_lower_triangular(&sing, &Matrix::zeros(1, 2)),
            Err(Error::SingularTriangular { column: 1, .. })
        ));
    }

    #[test]
    fn qr_least_squares_matches_normal_equations() {
        // min ‖X − A·Zᵀ‖ over A: via Z = Q₀R₀ solve A·R₀ᵀ = X·Q₀.
        let z = rand_matrix(15, 4, 9);
        let xm = rand_matrix(6, 15, 10);
        let qr = thin_qr(&z);
        let v = xm.matmul(&qr.q).unwrap();
        let a_qr = solve_rows_lower_triangular(&qr.r.transpose(), &v).unwrap();
        let a_ne = solve_spd(&z.gram(), &xm.matmul(&z).unwrap()).unwrap().x;
        assert!(a_qr.relative_diff(&a_ne).unwrap() <= 1e-8);
        let res = a_qr
            .matmul(&qr.r.transpose())
            .unwrap()
            .sub(&v)
            .unwrap()
            .frobenius_norm();
        assert!(res <= 1e-12 * v.frobenius_norm());
    }

    #[test]
    fn normalize_examples() {
        let (a, w) = normalize_columns(&Matrix::from_rows(&[[3.0], [4.0]]).unwrap());
        assert!((a[(0, 0)] - 0.6).abs() < 1e-15 && (a[(1, 0)] - 0.8).abs() < 1e-15);
        assert_eq!(w, vec![5.0]);

        let (a, w) = normalize_columns(&Matrix::zeros(3, 1));
        assert_eq!(a.column(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(w, vec![0.0]);

        let m = rand_matrix(5, 3, 11);
        let (a, w) = normalize_columns(&m);
        let back = Matrix::from_fn(5, 3, |i, j| a[(i, j)] * w[j]);
        assert!(back.sub(&m).unwrap().max_abs() <= 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn qr_invariants(m in 1usize..512, n in 1usize..64, seed in any::<u64>()) {
            let (m, n) = (m.max(n), n);
            let a = rand_matrix(m, n, seed);
            let qr = thin_qr(&a);
            let qtq = qr.q.gram();
            prop_assert!(qtq.sub(&Matrix::identity(n)).unwrap().max_abs() <= 1e-12);
            let recon = qr.q.matmul(&qr.r).unwrap();
            prop_assert!(recon.sub(&a).unwrap().frobenius_norm() <= 1e-12 * a.frobenius_norm());
            for i in 0..n {
                prop_assert!(qr.r[(i, i)] >= 0.0);
            }
        }
    }
}
