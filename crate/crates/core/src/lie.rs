//! Lie-algebra primitives on gl(k, C).
//!
//! The invariant pairing is `<X, Y> = tr(XY)`. On sl(k) the Killing form is
//! `2k tr(XY)`; every identity used by this crate is homogeneous in the
//! pairing, so the constant does not matter.
//!
//! The invariant polynomial algebra of gl(k) is generated by the power traces
//! `P_m(X) = tr(X^m)`, `m = 1..k`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MtvError, Result};
use crate::linalg::{
    self, check_same_size, check_square, commutator, matrix_power, r, trace, ComplexMatrix, C64,
};

pub fn pairing(x: &ComplexMatrix, y: &ComplexMatrix) -> Result<C64> {
    check_same_size(x, y)?;
    Ok(pair(x, y))
}

/// Unchecked `tr(XY)` for internal use on matrices known to match.
pub(crate) fn pair(x: &ComplexMatrix, y: &ComplexMatrix) -> C64 {
    // tr(XY) = sum_ij X_ij Y_ji
    let k = x.nrows();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            s += x[(i, j)] * y[(j, i)];
        }
    }
    s
}

/// `coefficient * tr(X^degree)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantPolynomial {
    pub degree: usize,
    pub coefficient: C64,
}

impl InvariantPolynomial {
    pub fn new(degree: usize, coefficient: C64) -> Result<Self> {
        if degree == 0 {
            return Err(MtvError::Dimension("invariant polynomial degree must be >= 1".into()));
        }
        Ok(Self { degree, coefficient })
    }

    pub fn power_trace(degree: usize) -> Self {
        Self { degree, coefficient: r(1.0) }
    }

    fn check(&self, k: usize) -> Result<()> {
        if self.degree == 0 || self.degree > k {
            return Err(MtvError::Dimension(format!(
                "degree {} outside 1..={k}",
                self.degree
            )));
        }
        Ok(())
    }
}

pub fn inv_poly_eval(p: &InvariantPolynomial, x: &ComplexMatrix) -> Result<C64> {
    let k = check_square(x, "X")?;
    p.check(k)?;
    Ok(p.coefficient * trace(&matrix_power(x, p.degree)))
}

/// The gradient `C_P(X)` with `<C_P(X), Y> = deg(P) p(X, ..., X, Y)`, which
/// for `P = c tr(X^m)` is `c m X^{m-1}`.
pub fn polarized_gradient(p: &InvariantPolynomial, x: &ComplexMatrix) -> Result<ComplexMatrix> {
    let k = check_square(x, "X")?;
    p.check(k)?;
    Ok(matrix_power(x, p.degree - 1) * (p.coefficient * r(p.degree as f64)))
}

/// Gradient of a finite sum of invariant polynomials.
pub fn combined_gradient(terms: &[InvariantPolynomial], x: &ComplexMatrix) -> Result<ComplexMatrix> {
    let k = check_square(x, "X")?;
    let mut out = linalg::zeros(k);
    for t in terms {
        out += polarized_gradient(t, x)?;
    }
    Ok(out)
}

/// An element of `A^{b+b'}`: one list of invariant polynomials per factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AElement {
    pub factors: Vec<Vec<InvariantPolynomial>>,
}

impl AElement {
    /// Degree-by-degree sum of coefficients across all factors.
    pub fn total(&self) -> Vec<(usize, C64)> {
        let max_deg = self
            .factors
            .iter()
            .flatten()
            .map(|p| p.degree)
            .max()
            .unwrap_or(0);
        (1..=max_deg)
            .map(|d| {
                let s = self
                    .factors
                    .iter()
                    .flatten()
                    .filter(|p| p.degree == d)
                    .map(|p| p.coefficient)
                    .sum();
                (d, s)
            })
            .collect()
    }

    /// Membership in `A_0`: the factor-wise sum vanishes.
    pub fn in_a0(&self, tol: f64) -> bool {
        self.total().iter().all(|(_, s)| s.norm() <= tol)
    }
}

/// The commutator operator `Y -> XY - YX` on column-major vectors.
fn ad_operator(x: &ComplexMatrix) -> DMatrix<C64> {
    linalg::left_mul_op(x) - linalg::right_mul_op(x)
}

/// Orthonormal basis (entrywise inner product) of the centralizer of `X`.
pub fn centralizer_basis(x: &ComplexMatrix) -> Result<Vec<ComplexMatrix>> {
    let k = check_square(x, "X")?;
    let ker = linalg::kernel(&ad_operator(x));
    Ok(ker
        .column_iter()
        .map(|col| linalg::mat_of(col.as_slice(), k))
        .collect())
}

pub fn centralizer_dim(x: &ComplexMatrix) -> Result<usize> {
    let k = check_square(x, "X")?;
    Ok(k * k - linalg::rank(&ad_operator(x)))
}

/// Regular means the centralizer has dimension k, the rank of gl(k).
pub fn is_regular(x: &ComplexMatrix) -> Result<bool> {
    let k = check_square(x, "X")?;
    Ok(centralizer_dim(x)? == k)
}

/// `||[A, B]||` in Frobenius norm.
pub fn commutator_norm(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    linalg::norm(&commutator(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_real_rows, identity, unit, zeros};

    fn swap2() -> ComplexMatrix {
        from_real_rows(2, &[0.0, 1.0, 1.0, 0.0])
    }

    #[test]
    fn pairing_examples() {
        assert_eq!(pairing(&identity(2), &identity(2)).unwrap(), r(2.0));
        assert_eq!(pairing(&unit(2, 1, 0), &unit(2, 0, 1)).unwrap(), r(1.0));
        assert_eq!(pairing(&swap2(), &swap2()).unwrap(), r(2.0));
        assert!(matches!(
            pairing(&identity(2), &identity(3)),
            Err(MtvError::Dimension(_))
        ));
    }

    #[test]
    fn inv_poly_examples() {
        let d = from_real_rows(2, &[1.0, 0.0, 0.0, 2.0]);
        assert_eq!(inv_poly_eval(&InvariantPolynomial::power_trace(1), &d).unwrap(), r(3.0));
        assert_eq!(inv_poly_eval(&InvariantPolynomial::power_trace(2), &swap2()).unwrap(), r(2.0));
        for m in 1..=3 {
            let p = InvariantPolynomial::power_trace(m);
            assert_eq!(inv_poly_eval(&p, &zeros(3)).unwrap(), r(0.0));
        }
        assert!(inv_poly_eval(&InvariantPolynomial::power_trace(3), &d).is_err());
    }

    #[test]
    fn gradient_examples() {
        let x = swap2();
        let g1 = polarized_gradient(&InvariantPolynomial::power_trace(1), &x).unwrap();
        assert_eq!(g1, identity(2));
        let g2 = polarized_gradient(&InvariantPolynomial::power_trace(2), &x).unwrap();
        assert_eq!(g2, &x * r(2.0));
        let x3 = swap2();
        let p3 = InvariantPolynomial::power_trace(3);
        // k = 2 caps the degree, so evaluate in gl(3) with the same block
        let mut big = zeros(3);
        big.view_mut((0, 0), (2, 2)).copy_from(&x3);
        let g3 = polarized_gradient(&p3, &big).unwrap();
        let mut expect = zeros(3);
        expect.view_mut((0, 0), (2, 2)).copy_from(&(identity(2) * r(3.0)));
        assert!(linalg::norm(&(g3 - expect)) < 1e-14);
    }

    #[test]
    fn centralizer_examples() {
        let d = from_real_rows(2, &[1.0, 0.0, 0.0, 2.0]);
        let basis = centralizer_basis(&d).unwrap();
        assert_eq!(basis.len(), 2);
        for b in &basis {
            assert!(b[(0, 1)].norm() < 1e-12 && b[(1, 0)].norm() < 1e-12);
        }
        let n = unit(2, 0, 1);
        let basis = centralizer_basis(&n).unwrap();
        assert_eq!(basis.len(), 2);
        for b in &basis {
            assert!(commutator_norm(b, &n) < 1e-12);
        }
        assert_eq!(centralizer_basis(&zeros(2)).unwrap().len(), 4);
    }

    #[test]
    fn regularity_examples() {
        assert!(is_regular(&from_real_rows(2, &[1.0, 0.0, 0.0, 2.0])).unwrap());
        assert!(!is_regular(&zeros(2)).unwrap());
        let mut j = zeros(4);
        for i in 0..3 {
            j[(i, i + 1)] = r(1.0);
        }
        assert!(is_regular(&j).unwrap());
        assert!(!is_regular(&identity(3)).unwrap());
    }

    #[test]
    fn a0_membership() {
        let p = InvariantPolynomial::power_trace(2);
        let mut q = p;
        q.coefficient = -q.coefficient;
        let a = AElement { factors: vec![vec![p], vec![q]] };
        assert!(a.in_a0(1e-14));
        let b = AElement { factors: vec![vec![p], vec![]] };
        assert!(!b.in_a0(1e-14));
    }
}
