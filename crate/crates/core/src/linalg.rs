//! Dense complex linear algebra shared by the geometric modules.
//!
//! Everything works on `DMatrix<Complex64>`. Numerical rank decisions use a
//! relative singular-value cutoff ([`RANK_TOL`]).

use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64;

use crate::error::{MtvError, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;

/// Singular values below `RANK_TOL * sigma_max` count as zero.
pub const RANK_TOL: f64 = 1e-9;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(k: usize) -> ComplexMatrix {
    DMatrix::identity(k, k)
}

pub fn zeros(k: usize) -> ComplexMatrix {
    DMatrix::zeros(k, k)
}

/// Elementary matrix `E_{ij}` (0-based).
pub fn unit(k: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = zeros(k);
    m[(i, j)] = ONE;
    m
}

/// Builds a matrix from real row-major data.
pub fn from_real_rows(k: usize, rows: &[f64]) -> ComplexMatrix {
    assert_eq!(rows.len(), k * k);
    DMatrix::from_fn(k, k, |i, j| r(rows[i * k + j]))
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

pub fn trace(a: &ComplexMatrix) -> C64 {
    a.diagonal().iter().copied().sum()
}

/// Frobenius norm.
pub fn norm(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_finite(a: &ComplexMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn check_square(a: &ComplexMatrix, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(MtvError::Dimension(format!(
            "{what} must be a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

pub fn check_same_size(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<usize> {
    let k = check_square(a, "left operand")?;
    let kb = check_square(b, "right operand")?;
    if k != kb {
        return Err(MtvError::Dimension(format!("{k}x{k} vs {kb}x{kb}")));
    }
    Ok(k)
}

/// Inverse with a conditioning guard: fails when the smallest singular value
/// is below `RANK_TOL` relative to the largest.
pub fn inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let k = check_square(a, "matrix")?;
    let sv = a.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        return Err(MtvError::Singular(format!(
            "{k}x{k} matrix with singular values in [{smin:e}, {smax:e}]"
        )));
    }
    a.clone()
        .try_inverse()
        .ok_or_else(|| MtvError::Singular("LU inversion failed".into()))
}

pub fn det(a: &ComplexMatrix) -> C64 {
    a.clone().determinant()
}

/// Ratio of extreme singular values (infinite when singular).
pub fn condition_number(a: &ComplexMatrix) -> f64 {
    let sv = a.clone().singular_values();
    let smin = sv.min();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / smin
    }
}

/// Numerical rank of an arbitrary (possibly rectangular) matrix.
pub fn rank(a: &DMatrix<C64>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Orthonormal basis of the null space of `a` (columns of the result).
pub fn kernel(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.ncols();
    // pad to square so the SVD returns a full right basis
    let m = if a.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = SVD::new(m, false, true);
    let v_t = svd.v_t.expect("requested V^H");
    let sv = &svd.singular_values;
    let smax = sv.max();
    let cols: Vec<DVector<C64>> = (0..sv.len())
        .filter(|&i| smax == 0.0 || sv[i] <= RANK_TOL * smax)
        .map(|i| v_t.row(i).transpose().map(|z| z.conj()))
        .collect();
    // rows beyond min(nrows, n) do not occur because we padded to square
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Scales every nonzero column to unit norm; the kernel dimension is
/// unchanged and the rank cutoff becomes insensitive to column scaling.
pub fn normalize_columns(a: &mut DMatrix<C64>) {
    for mut col in a.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= C64::new(n, 0.0);
        }
    }
}

/// Orthonormal basis (Frobenius pairing) of the span of the given matrices,
/// assumed independent.
pub fn orthonormal_span(ms: &[ComplexMatrix]) -> Vec<ComplexMatrix> {
    let Some(first) = ms.first() else {
        return Vec::new();
    };
    let (r, c) = first.shape();
    let cols: Vec<DVector<C64>> = ms.iter().map(vec_of).collect();
    let q = DMatrix::from_columns(&cols).qr().q();
    q.column_iter()
        .map(|v| ComplexMatrix::from_column_slice(r, c, v.as_slice()))
        .collect()
}

/// Column-major vectorization.
pub fn vec_of(a: &ComplexMatrix) -> DVector<C64> {
    DVector::from_iterator(a.len(), a.iter().copied())
}

pub fn mat_of(v: &[C64], k: usize) -> ComplexMatrix {
    DMatrix::from_column_slice(k, k, v)
}

/// Left multiplication operator `Y -> A Y` on column-major vectors.
pub fn left_mul_op(a: &ComplexMatrix) -> DMatrix<C64> {
    let k = a.nrows();
    identity(k).kronecker(a)
}

/// Right multiplication operator `Y -> Y A` on column-major vectors.
pub fn right_mul_op(a: &ComplexMatrix) -> DMatrix<C64> {
    let k = a.nrows();
    a.transpose().kronecker(&identity(k))
}

/// Matrix exponential (scaling and squaring with Padé, via nalgebra).
pub fn expm(a: &ComplexMatrix) -> ComplexMatrix {
    a.clone().exp()
}

/// Derivative of the exponential at `a` in direction `d`, read off the
/// upper-right block of `exp([[a, d], [0, a]])`.
pub fn expm_frechet(a: &ComplexMatrix, d: &ComplexMatrix) -> ComplexMatrix {
    let k = a.nrows();
    let mut big = DMatrix::zeros(2 * k, 2 * k);
    big.view_mut((0, 0), (k, k)).copy_from(a);
    big.view_mut((k, k), (k, k)).copy_from(a);
    big.view_mut((0, k), (k, k)).copy_from(d);
    let e = big.exp();
    e.view((0, k), (k, k)).into_owned()
}

pub fn matrix_power(a: &ComplexMatrix, m: usize) -> ComplexMatrix {
    let mut out = identity(a.nrows());
    for _ in 0..m {
        out = &out * a;
    }
    out
}

/// Characteristic polynomial `det(tI - A) = t^k + a_1 t^{k-1} + ... + a_k`,
/// returned as `[1, a_1, ..., a_k]` (Faddeev-LeVerrier).
pub fn char_poly(a: &ComplexMatrix) -> Vec<C64> {
    let k = a.nrows();
    let mut coeffs = vec![ONE; k + 1];
    let mut m = zeros(k);
    for step in 1..=k {
        m = a * &m + identity(k) * coeffs[step - 1];
        let am = a * &m;
        coeffs[step] = -trace(&am) / r(step as f64);
    }
    coeffs
}

/// Krylov matrix `[v, Av, ..., A^{k-1} v]`.
pub fn krylov(a: &ComplexMatrix, v: &DVector<C64>) -> ComplexMatrix {
    let k = a.nrows();
    let mut cols = Vec::with_capacity(k);
    let mut cur = v.clone();
    for _ in 0..k {
        cols.push(cur.clone());
        cur = a * &cur;
    }
    DMatrix::from_columns(&cols)
}

/// Eigenvalues through the complex Schur form.
pub fn eigenvalues(a: &ComplexMatrix) -> Result<Vec<C64>> {
    let k = check_square(a, "matrix")?;
    if k == 1 {
        return Ok(vec![a[(0, 0)]]);
    }
    let schur = Schur::try_new(a.clone(), 1e-15, 10_000)
        .ok_or_else(|| MtvError::Conditioning("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..k).map(|i| t[(i, i)]).collect())
}

/// Standard basis vector.
pub fn basis_vector(k: usize, i: usize) -> DVector<C64> {
    let mut v = DVector::zeros(k);
    v[i] = ONE;
    v
}

/// Finds `T` with `T a T^{-1} = b` for regular `a`, `b` sharing a
/// characteristic polynomial, as `K_b(w) K_a(v)^{-1}`.
///
/// `v` and `w` must be cyclic for `a` and `b` respectively.
pub fn krylov_conjugator(
    a: &ComplexMatrix,
    v: &DVector<C64>,
    b: &ComplexMatrix,
    w: &DVector<C64>,
) -> Result<ComplexMatrix> {
    let ka = krylov(a, v);
    let kb = krylov(b, w);
    let ka_inv = inverse(&ka)
        .map_err(|_| MtvError::NotRegular("vector is not cyclic for source matrix".into()))?;
    let t = kb * ka_inv;
    inverse(&t).map_err(|_| MtvError::NotRegular("vector is not cyclic for target".into()))?;
    Ok(t)
}

/// A cyclic vector for a regular matrix, picked among a few deterministic
/// candidates by the conditioning of its Krylov matrix.
pub fn cyclic_vector(a: &ComplexMatrix) -> Result<DVector<C64>> {
    let k = a.nrows();
    let mut candidates: Vec<DVector<C64>> = (0..k).map(|i| basis_vector(k, i)).collect();
    candidates.push(DVector::from_element(k, ONE));
    candidates.push(DVector::from_fn(k, |i, _| c(1.0 + i as f64 * 0.37, 0.21 * (i as f64 + 1.0))));
    let best = candidates
        .into_iter()
        .map(|v| {
            let kv = krylov(a, &v);
            (condition_number(&kv), v)
        })
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .expect("non-empty candidate list");
    if !best.0.is_finite() || best.0 > 1.0 / RANK_TOL {
        return Err(MtvError::NotRegular("no cyclic vector found".into()));
    }
    Ok(best.1)
}
