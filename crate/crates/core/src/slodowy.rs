//! Principal sl(2)-triples and the Slodowy slice `S = e + Z(f)` in gl(k).
//!
//! Conventions: negative roots are lower triangular, so `e` carries ones on
//! the first subdiagonal, `h = diag(-(k-1), -(k-3), ..., k-1)` and `f` sits on
//! the superdiagonal with entries `i (k - i)`. The centralizer `Z(f)` is
//! spanned by the powers `f^0, ..., f^{k-1}`, which gives global slice
//! coordinates `X = e + sum_j c_j f^j`.
//!
//! The slice coordinates are weighted-homogeneous: `c_j` has weight `j + 1`
//! and the `m`-th characteristic coefficient has weight `m`, so the `m`-th
//! coefficient is affine in `c_{m-1}` once `c_0..c_{m-2}` are fixed. That is
//! the triangular system solved by [`slice_representative`].

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{MtvError, Result};
use crate::lie;
use crate::linalg::{self, char_poly, check_square, matrix_power, r, ComplexMatrix, C64, ONE};

/// Absolute tolerance on matrix entries for slice membership.
pub const SLICE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalTriple {
    pub e: ComplexMatrix,
    pub h: ComplexMatrix,
    pub f: ComplexMatrix,
}

/// Per-k data computed once: the triple and the powers of `f`.
#[derive(Debug)]
struct SliceData {
    triple: PrincipalTriple,
    f_powers: Vec<ComplexMatrix>,
}

fn slice_data(k: usize) -> Arc<SliceData> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<SliceData>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(d) = cache.read().expect("slice cache poisoned").get(&k) {
        return d.clone();
    }
    let triple = build_triple(k);
    let f_powers = (0..k).map(|j| matrix_power(&triple.f, j)).collect();
    let data = Arc::new(SliceData { triple, f_powers });
    cache
        .write()
        .expect("slice cache poisoned")
        .entry(k)
        .or_insert(data)
        .clone()
}

fn build_triple(k: usize) -> PrincipalTriple {
    let mut e = linalg::zeros(k);
    let mut h = linalg::zeros(k);
    let mut f = linalg::zeros(k);
    for i in 0..k {
        h[(i, i)] = r(2.0 * i as f64 - (k as f64 - 1.0));
    }
    for i in 0..k.saturating_sub(1) {
        e[(i + 1, i)] = ONE;
        // 1-based: f_i = i (k - i)
        let one_based = (i + 1) as f64;
        f[(i, i + 1)] = r(one_based * (k as f64 - one_based));
    }
    PrincipalTriple { e, h, f }
}

pub fn principal_triple(k: usize) -> Result<PrincipalTriple> {
    if k == 0 {
        return Err(MtvError::Dimension("k must be >= 1".into()));
    }
    Ok(slice_data(k).triple.clone())
}

/// A point of the slice, stored by its coefficients in the basis `f^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicePoint {
    pub k: usize,
    #[serde(with = "crate::json::vector")]
    pub coeffs: Vec<C64>,
}

impl SlicePoint {
    pub fn new(coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(MtvError::Dimension("slice point needs k >= 1 coefficients".into()));
        }
        if coeffs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(MtvError::Dimension("non-finite slice coefficient".into()));
        }
        Ok(Self { k: coeffs.len(), coeffs })
    }

    /// The nilpotent vertex `e`.
    pub fn origin(k: usize) -> Self {
        Self { k, coeffs: vec![C64::new(0.0, 0.0); k] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.coeffs.len() != self.k {
            return Err(MtvError::Dimension(format!(
                "slice point declares k = {} with {} coefficients",
                self.k,
                self.coeffs.len()
            )));
        }
        Ok(())
    }

    pub fn embed(&self) -> ComplexMatrix {
        slice_embed(self)
    }

    /// Largest coefficient difference.
    pub fn distance(&self, other: &SlicePoint) -> f64 {
        if self.k != other.k {
            return f64::INFINITY;
        }
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Tangent direction `sum_j dc_j f^j` at any slice point.
    pub fn direction(k: usize, dc: &[C64]) -> ComplexMatrix {
        let data = slice_data(k);
        let mut out = linalg::zeros(k);
        for (cj, fj) in dc.iter().zip(&data.f_powers) {
            out += fj * *cj;
        }
        out
    }
}

pub fn slice_embed(s: &SlicePoint) -> ComplexMatrix {
    let data = slice_data(s.k);
    let mut x = data.triple.e.clone();
    for (cj, fj) in s.coeffs.iter().zip(&data.f_powers) {
        x += fj * *cj;
    }
    x
}

/// The unique slice point with the same characteristic polynomial as `x`.
pub fn slice_representative(x: &ComplexMatrix) -> Result<SlicePoint> {
    check_square(x, "X")?;
    if !lie::is_regular(x)? {
        return Err(MtvError::NotRegular("slice_representative needs a regular element".into()));
    }
    Ok(slice_from_char_poly(&char_poly(x)))
}

/// Solves the triangular system for the slice point with characteristic
/// polynomial `[1, a_1, ..., a_k]`.
pub fn slice_from_char_poly(target: &[C64]) -> SlicePoint {
    let k = target.len() - 1;
    let mut coeffs = vec![C64::new(0.0, 0.0); k];
    for m in 1..=k {
        coeffs[m - 1] = C64::new(0.0, 0.0);
        let a0 = char_poly(&slice_embed(&SlicePoint { k, coeffs: coeffs.clone() }))[m];
        coeffs[m - 1] = ONE;
        let a1 = char_poly(&slice_embed(&SlicePoint { k, coeffs: coeffs.clone() }))[m];
        // a1 - a0 is a nonzero constant depending only on (k, m)
        coeffs[m - 1] = (target[m] - a0) / (a1 - a0);
    }
    SlicePoint { k, coeffs }
}

/// Slice point whose characteristic polynomial is `prod (t - z_i)^{l_i}`.
pub fn slice_from_roots(roots: &[(C64, usize)]) -> SlicePoint {
    let mut poly = vec![ONE];
    for &(z, l) in roots {
        for _ in 0..l {
            let mut next = vec![C64::new(0.0, 0.0); poly.len() + 1];
            for (i, p) in poly.iter().enumerate() {
                next[i] += p;
                next[i + 1] -= p * z;
            }
            poly = next;
        }
    }
    slice_from_char_poly(&poly)
}

/// Checks `X - e` against `span{f^j}` entry by entry.
pub fn is_in_slice(x: &ComplexMatrix) -> bool {
    let Ok(k) = check_square(x, "X") else {
        return false;
    };
    let data = slice_data(k);
    // f^j lives on the j-th superdiagonal with entries that are products of
    // the f_i; read c_j off the first entry of that diagonal
    let mut coeffs = Vec::with_capacity(k);
    for j in 0..k {
        let pivot = data.f_powers[j][(0, j)];
        let mut entry = x[(0, j)];
        if j == 0 {
            entry -= data.triple.e[(0, 0)];
        }
        coeffs.push(entry / pivot);
    }
    let rebuilt = slice_embed(&SlicePoint { k, coeffs });
    linalg::max_abs(&(x - rebuilt)) <= SLICE_TOL
}

/// Reads the coefficients back from a matrix known to lie in the slice.
pub fn slice_coordinates(x: &ComplexMatrix) -> Result<SlicePoint> {
    let k = check_square(x, "X")?;
    if !is_in_slice(x) {
        return Err(MtvError::NotRegular("matrix is not in the slice".into()));
    }
    let data = slice_data(k);
    let coeffs = (0..k)
        .map(|j| x[(0, j)] / data.f_powers[j][(0, j)])
        .collect();
    Ok(SlicePoint { k, coeffs })
}
