//! Transverse 0-dimensional subschemes of `C x S_k^{b,b'}` and the
//! presymplectic space `F_k^{1,0}`.
//!
//! A scheme is a list of local pieces. A piece sits over `z in C` with length
//! `l` and carries, for every factor, a vector polynomial
//! `x(eps) = x^0 + x^1 eps + ... + x^{l-1} eps^{l-1}`, defined modulo the jet
//! group `{(lambda_1(eps), ..., lambda_n(eps)) : prod lambda_j = 1}` acting by
//! multiplication.
//!
//! Matrices: the Jordan block `J_{z,l} = zI + N` has ones above the diagonal.
//! For an incoming factor `G` has the jet vectors as columns and the jet group
//! acts by `G -> G lambda(J)`; for an outgoing factor the jets are covectors,
//! `G` has them as rows and the jet group acts by `G -> lambda(J)^T G`.
//!
//! Several pieces may share a base point; such schemes lie in the Fitting
//! transverse locus but not in the transverse Hilbert scheme, and
//! [`is_transverse`] tells the two apart.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MtvError, Result};
use crate::lie::pair;
use crate::linalg::{self, commutator, inverse, ComplexMatrix, C64, ONE, ZERO};
use crate::slodowy::{self, SlicePoint};
use crate::u::UClass;
use crate::w::Orientation;

/// Base points closer than this count as one point.
pub const Z_SEPARATION: f64 = 1e-10;
/// Eigenvalues of the slice element within this distance (relative to
/// `1 + max |root|`) are merged into one piece by [`u_to_hilb`].
pub const CLUSTER_RADIUS: f64 = 1e-3;
/// Distinct merged roots must be at least this far apart (same scaling).
pub const ROOT_SEPARATION: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPiece {
    #[serde(with = "crate::json::scalar")]
    pub z: C64,
    #[serde(rename = "len")]
    pub length: usize,
    /// `jets[j][m]` is the coefficient `x_j^m` of factor `j`.
    #[serde(with = "jets_json")]
    pub jets: Vec<Vec<Vec<C64>>>,
}

mod jets_json {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::json::Scalar;
    use crate::linalg::C64;

    pub fn serialize<S: Serializer>(v: &[Vec<Vec<C64>>], s: S) -> Result<S::Ok, S::Error> {
        let out: Vec<Vec<Vec<Scalar>>> = v
            .iter()
            .map(|f| f.iter().map(|x| x.iter().copied().map(Scalar::from).collect()).collect())
            .collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Vec<C64>>>, D::Error> {
        let raw = Vec::<Vec<Vec<Scalar>>>::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|f| f.into_iter().map(|x| x.into_iter().map(C64::from).collect()).collect())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme")]
pub struct JetScheme {
    pub k: usize,
    pub b: usize,
    pub bprime: usize,
    pub pieces: Vec<LocalPiece>,
}

#[derive(Deserialize)]
struct RawScheme {
    k: usize,
    b: usize,
    bprime: usize,
    pieces: Vec<LocalPiece>,
}

impl TryFrom<RawScheme> for JetScheme {
    type Error = MtvError;

    fn try_from(r: RawScheme) -> Result<Self> {
        JetScheme::new(r.k, r.b, r.bprime, r.pieces)
    }
}

/// Tangent vector to `F_k^{1,0}`: `rho = dG G^{-1}` and, per piece, the
/// coefficients of `dJ_i = sum_m dc[i][m] L^m` with `L` the lower shift.
/// `dc[i][0]` is the eigenvalue shift of piece `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FTangent {
    pub rho: ComplexMatrix,
    pub dc: Vec<Vec<C64>>,
}

impl FTangent {
    pub fn zero(d: &JetScheme) -> Self {
        Self {
            rho: linalg::zeros(d.k),
            dc: d.pieces.iter().map(|p| vec![ZERO; p.length]).collect(),
        }
    }

    /// Fundamental vector field component plus pure eigenvalue shifts.
    pub fn eigen(rho: ComplexMatrix, dz: &[C64], d: &JetScheme) -> Self {
        let dc = d
            .pieces
            .iter()
            .zip(dz)
            .map(|(p, &z)| {
                let mut v = vec![ZERO; p.length];
                v[0] = z;
                v
            })
            .collect();
        Self { rho, dc }
    }
}

fn piece_order(a: &LocalPiece, b: &LocalPiece) -> std::cmp::Ordering {
    a.z.re
        .total_cmp(&b.z.re)
        .then(a.z.im.total_cmp(&b.z.im))
        .then(a.length.cmp(&b.length))
}

impl JetScheme {
    /// Validates and sorts the pieces by `(Re z, Im z, length)`.
    pub fn new(k: usize, b: usize, bprime: usize, mut pieces: Vec<LocalPiece>) -> Result<Self> {
        let n = b + bprime;
        if k == 0 || n == 0 {
            return Err(MtvError::Validation("need k >= 1 and at least one factor".into()));
        }
        let total: usize = pieces.iter().map(|p| p.length).sum();
        if total != k {
            return Err(MtvError::Validation(format!("piece lengths sum to {total}, expected {k}")));
        }
        for (i, p) in pieces.iter().enumerate() {
            if p.length == 0 {
                return Err(MtvError::Validation(format!("piece {i} has length 0")));
            }
            if !(p.z.re.is_finite() && p.z.im.is_finite()) {
                return Err(MtvError::Validation(format!("piece {i} has a non-finite base point")));
            }
            if p.jets.len() != n {
                return Err(MtvError::Validation(format!(
                    "piece {i} has jets for {} factors, expected {n}",
                    p.jets.len()
                )));
            }
            for (j, jet) in p.jets.iter().enumerate() {
                if jet.len() != p.length || jet.iter().any(|x| x.len() != k) {
                    return Err(MtvError::Validation(format!("piece {i}, factor {j}: jet shape")));
                }
                if jet.iter().flatten().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                    return Err(MtvError::Validation(format!("piece {i}, factor {j}: non-finite jet")));
                }
                if jet[0].iter().all(|z| z.norm() == 0.0) {
                    return Err(MtvError::Degenerate(format!("piece {i}, factor {j}: zero leading vector")));
                }
            }
        }
        pieces.sort_by(piece_order);
        Ok(Self { k, b, bprime, pieces })
    }

    pub fn n(&self) -> usize {
        self.b + self.bprime
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.pieces.iter().map(|p| p.length).collect()
    }

    fn orientation(&self, j: usize) -> Orientation {
        if j < self.b {
            Orientation::Incoming
        } else {
            Orientation::Outgoing
        }
    }

    fn check_factor(&self, j: usize) -> Result<()> {
        if j >= self.n() {
            return Err(MtvError::Index(format!("factor {j} of {}", self.n())));
        }
        Ok(())
    }
}

/// `a(eps) b(eps) mod eps^len`.
fn poly_mul(a: &[C64], b: &[C64], len: usize) -> Vec<C64> {
    let mut out = vec![ZERO; len];
    for (i, x) in a.iter().enumerate().take(len) {
        for (j, y) in b.iter().enumerate().take(len - i) {
            out[i + j] += x * y;
        }
    }
    out
}

/// Inverse power series of `a` with `a[0] != 0`, truncated to `len`.
fn poly_inv(a: &[C64], len: usize) -> Vec<C64> {
    let mut inv = vec![ZERO; len];
    inv[0] = ONE / a[0];
    for m in 1..len {
        let mut s = ZERO;
        for r in 1..=m.min(a.len() - 1) {
            s += a[r] * inv[m - r];
        }
        inv[m] = -s * inv[0];
    }
    inv
}

/// Multiplies the vector polynomial `x` by the scalar polynomial `lambda`.
fn jet_times(x: &[Vec<C64>], lambda: &[C64]) -> Vec<Vec<C64>> {
    let len = x.len();
    let k = x[0].len();
    (0..len)
        .map(|m| {
            (0..k)
                .map(|c| (0..=m).map(|r| lambda.get(r).copied().unwrap_or(ZERO) * x[m - r][c]).sum())
                .collect()
        })
        .collect()
}

/// Applies jet-group elements `lambdas[j]` factor by factor. The caller is
/// responsible for `prod lambda_j = 1` when orbit membership matters.
pub fn jet_group_act(piece: &LocalPiece, lambdas: &[Vec<C64>]) -> Result<LocalPiece> {
    if lambdas.len() != piece.jets.len() {
        return Err(MtvError::Signature("one polynomial per factor expected".into()));
    }
    let jets = piece.jets.iter().zip(lambdas).map(|(x, l)| jet_times(x, l)).collect();
    Ok(LocalPiece { jets, ..piece.clone() })
}

/// Product of the given polynomials, truncated.
pub fn jet_product(lambdas: &[Vec<C64>], len: usize) -> Vec<C64> {
    let mut one = vec![ZERO; len];
    one[0] = ONE;
    lambdas.iter().fold(one, |acc, l| poly_mul(&acc, l, len))
}

fn pivot_index(v: &[C64]) -> usize {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    // first index that is maximal up to rounding, so the choice survives rescaling
    v.iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-12))
        .unwrap_or(0)
}

/// Canonical representative under the jet group.
///
/// Every factor except the last is divided by the polynomial formed by its
/// pivot component (the largest entry of the leading vector), so that
/// component becomes `1 + 0 eps + ...`; the last factor absorbs the product.
/// With a single factor the jet group is trivial and the piece is returned
/// as is.
pub fn jet_normalize(piece: &LocalPiece) -> Result<LocalPiece> {
    let n = piece.jets.len();
    for (j, x) in piece.jets.iter().enumerate() {
        if x.is_empty() || x[0].iter().all(|z| z.norm() == 0.0) {
            return Err(MtvError::Degenerate(format!("factor {j}: zero leading vector")));
        }
    }
    if n < 2 {
        return Ok(piece.clone());
    }
    let len = piece.length;
    let mut lambdas = Vec::with_capacity(n);
    let mut absorbed = vec![ZERO; len];
    absorbed[0] = ONE;
    for x in &piece.jets[..n - 1] {
        let p = pivot_index(&x[0]);
        let pi: Vec<C64> = x.iter().map(|v| v[p]).collect();
        absorbed = poly_mul(&absorbed, &pi, len);
        lambdas.push(poly_inv(&pi, len));
    }
    lambdas.push(absorbed);
    jet_group_act(piece, &lambdas)
}

pub fn normalize_scheme(d: &JetScheme) -> Result<JetScheme> {
    let pieces = d.pieces.iter().map(jet_normalize).collect::<Result<Vec<_>>>()?;
    Ok(JetScheme { pieces, ..d.clone() })
}

/// Largest difference between the normal forms of two schemes with the same
/// Jordan data, relative to the jet magnitudes; infinite when the base
/// points, lengths or signatures differ beyond `1e-8`.
pub fn jet_distance(d1: &JetScheme, d2: &JetScheme) -> Result<f64> {
    if (d1.k, d1.b, d1.bprime, d1.pieces.len()) != (d2.k, d2.b, d2.bprime, d2.pieces.len()) {
        return Ok(f64::INFINITY);
    }
    let (n1, n2) = (normalize_scheme(d1)?, normalize_scheme(d2)?);
    let mut worst: f64 = 0.0;
    for (p, q) in n1.pieces.iter().zip(&n2.pieces) {
        if p.length != q.length || (p.z - q.z).norm() > 1e-8 * (1.0 + p.z.norm()) {
            return Ok(f64::INFINITY);
        }
        worst = worst.max((p.z - q.z).norm() / (1.0 + p.z.norm()));
        let scale = 1.0 + p.jets.iter().flatten().flatten().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in p.jets.iter().flatten().flatten().zip(q.jets.iter().flatten().flatten()) {
            worst = worst.max((a - b).norm() / scale);
        }
    }
    Ok(worst)
}

/// Same Jordan data and normal forms within `tol` (see [`jet_distance`]).
pub fn jet_equivalent(d1: &JetScheme, d2: &JetScheme, tol: f64) -> Result<bool> {
    Ok(jet_distance(d1, d2)? <= tol)
}

/// Assembles factor `j` without checking invertibility: columns for incoming
/// factors, rows for outgoing ones, in piece order.
fn assemble(d: &JetScheme, j: usize) -> ComplexMatrix {
    let k = d.k;
    let mut g = linalg::zeros(k);
    let mut col = 0;
    for p in &d.pieces {
        for x in &p.jets[j] {
            for (r, z) in x.iter().enumerate() {
                match d.orientation(j) {
                    Orientation::Incoming => g[(r, col)] = *z,
                    Orientation::Outgoing => g[(col, r)] = *z,
                }
            }
            col += 1;
        }
    }
    g
}

/// `G_j(D)`; see the module notes for the outgoing layout.
pub fn g_matrix(d: &JetScheme, j: usize) -> Result<ComplexMatrix> {
    d.check_factor(j)?;
    let g = assemble(d, j);
    if linalg::rank(&g) < d.k {
        return Err(MtvError::Degenerate(format!("factor {j}: jet vectors are dependent")));
    }
    Ok(g)
}

pub fn fitting_transverse(d: &JetScheme) -> Result<bool> {
    JetScheme::new(d.k, d.b, d.bprime, d.pieces.clone())?;
    Ok(true)
}

/// Every factor's assembled matrix is invertible.
pub fn nondegenerate(d: &JetScheme) -> bool {
    (0..d.n()).all(|j| linalg::rank(&assemble(d, j)) == d.k)
}

/// Per-piece independence of each factor's jet vectors.
pub fn locally_nondegenerate(d: &JetScheme) -> bool {
    d.pieces.iter().all(|p| {
        p.jets.iter().all(|x| {
            let m = DMatrix::from_fn(d.k, p.length, |r, c| x[c][r]);
            linalg::rank(&m) == p.length
        })
    })
}

/// Base points pairwise distinct: one local branch over each point.
pub fn is_transverse(d: &JetScheme) -> bool {
    d.pieces.iter().enumerate().all(|(i, p)| {
        d.pieces[i + 1..].iter().all(|q| (p.z - q.z).norm() > Z_SEPARATION)
    })
}

/// Dimension of the infinitesimal stabilizer of `D` in factor `j`.
///
/// Unknowns: `xi` in gl(k) moving factor `j`, and a jet-algebra element
/// `Lambda_i` (block-diagonal polynomials in `N`) per factor, with
/// `sum Lambda_i = 0`. Equations: `xi G_j = G_j Lambda_j` and
/// `G_i Lambda_i = 0` for `i != j` (transposed layout for outgoing factors).
pub fn stabilizer_dimension(d: &JetScheme, j: usize) -> Result<usize> {
    d.check_factor(j)?;
    let (n, k) = (d.n(), d.k);
    let kk = k * k;
    let nblocks: usize = d.k;
    // jet-algebra basis: per piece, powers N^m of its block
    let mut basis = Vec::with_capacity(nblocks);
    let mut off = 0;
    for p in &d.pieces {
        for m in 0..p.length {
            let mut e = linalg::zeros(k);
            for r in 0..p.length - m {
                e[(off + r, off + r + m)] = ONE;
            }
            basis.push(e);
        }
        off += p.length;
    }
    let unknowns = kk + n * nblocks;
    let mut sys = DMatrix::<C64>::zeros(n * kk + nblocks, unknowns);
    for i in 0..n {
        let g = assemble(d, i);
        let incoming = d.orientation(i) == Orientation::Incoming;
        if i == j {
            // incoming: xi G; outgoing: the covector action G xi^... enters as -G xi
            let op = if incoming { linalg::right_mul_op(&g) } else { -linalg::left_mul_op(&g) };
            sys.view_mut((i * kk, 0), (kk, kk)).copy_from(&op);
        }
        for (t, e) in basis.iter().enumerate() {
            let col = if incoming { -(&g * e) } else { -(e.transpose() * &g) };
            let v: DVector<C64> = linalg::vec_of(&col);
            sys.view_mut((i * kk, kk + i * nblocks + t), (kk, 1)).copy_from(&v);
        }
    }
    for i in 0..n {
        for t in 0..nblocks {
            sys[(n * kk + t, kk + i * nblocks + t)] = ONE;
        }
    }
    Ok(linalg::kernel(&sys).ncols())
}

/// Membership in `F_k^{b,b'}`: finite stabilizer in every factor.
pub fn in_f_locus(d: &JetScheme) -> Result<bool> {
    for j in 0..d.n() {
        if stabilizer_dimension(d, j)? != 0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// The points handled by [`hilb_to_u`]: transverse and nondegenerate.
pub fn in_u_locus(d: &JetScheme) -> bool {
    is_transverse(d) && nondegenerate(d)
}

pub fn jordan_block(z: C64, l: usize) -> ComplexMatrix {
    let mut j = linalg::identity(l) * z;
    for i in 0..l.saturating_sub(1) {
        j[(i, i + 1)] = ONE;
    }
    j
}

fn block_diag(blocks: &[ComplexMatrix]) -> ComplexMatrix {
    let k: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = linalg::zeros(k);
    let mut off = 0;
    for b in blocks {
        let l = b.nrows();
        out.view_mut((off, off), (l, l)).copy_from(b);
        off += l;
    }
    out
}

pub fn jordan_of(d: &JetScheme) -> ComplexMatrix {
    let blocks: Vec<ComplexMatrix> = d.pieces.iter().map(|p| jordan_block(p.z, p.length)).collect();
    block_diag(&blocks)
}

/// Sum of the last (or first) basis vectors of the blocks: cyclic for `J`
/// (or `J^T`) when the base points are distinct.
fn block_cyclic(lengths: &[usize], last: bool) -> DVector<C64> {
    let k: usize = lengths.iter().sum();
    let mut v = DVector::zeros(k);
    let mut off = 0;
    for &l in lengths {
        v[if last { off + l - 1 } else { off }] = ONE;
        off += l;
    }
    v
}

/// `(T, T')` with `T X T^{-1} = J` and `T' X T'^{-1} = J^T`.
pub fn jordan_conjugators(
    x: &ComplexMatrix,
    j: &ComplexMatrix,
    lengths: &[usize],
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let k = x.nrows();
    let e1 = linalg::basis_vector(k, 0);
    let t = linalg::krylov_conjugator(x, &e1, j, &block_cyclic(lengths, true))?;
    let tp = linalg::krylov_conjugator(x, &e1, &j.transpose(), &block_cyclic(lengths, false))?;
    Ok((t, tp))
}

/// The class of `D` in `U^{b,b'}`: `X` has the characteristic polynomial
/// `prod (t - z_i)^{l_i}`, `g = G T` on incoming and `g = T'^{-1} G` on
/// outgoing factors.
pub fn hilb_to_u(d: &JetScheme) -> Result<UClass> {
    if !is_transverse(d) {
        return Err(MtvError::Degenerate("several pieces share a base point".into()));
    }
    if !nondegenerate(d) {
        return Err(MtvError::Degenerate("jet vectors are dependent in some factor".into()));
    }
    let roots: Vec<(C64, usize)> = d.pieces.iter().map(|p| (p.z, p.length)).collect();
    let x = slodowy::slice_from_roots(&roots);
    let j = jordan_of(d);
    let (t, tp) = jordan_conjugators(&x.embed(), &j, &d.lengths())?;
    let tp_inv = inverse(&tp)?;
    let gs = (0..d.n())
        .map(|f| {
            let g = g_matrix(d, f)?;
            Ok(match d.orientation(f) {
                Orientation::Incoming => g * &t,
                Orientation::Outgoing => &tp_inv * g,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    UClass::new(d.b, d.bprime, gs, x)
}

/// Roots of the characteristic polynomial of the slice element, merged into
/// clusters, as `(center, multiplicity)` in piece order.
pub fn spectral_data(x: &SlicePoint) -> Result<Vec<(C64, usize)>> {
    let roots = linalg::eigenvalues(&x.embed())?;
    let scale = 1.0 + roots.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let n = roots.len();
    let mut label: Vec<usize> = (0..n).collect();
    // single linkage by repeated relabelling; n <= a few dozen
    let mut changed = true;
    while changed {
        changed = false;
        for a in 0..n {
            for b in 0..n {
                if label[a] != label[b] && (roots[a] - roots[b]).norm() <= CLUSTER_RADIUS * scale {
                    let (lo, hi) = (label[a].min(label[b]), label[a].max(label[b]));
                    label.iter_mut().filter(|l| **l == hi).for_each(|l| *l = lo);
                    changed = true;
                }
            }
        }
    }
    let mut groups: Vec<(C64, usize)> = Vec::new();
    let mut ids: Vec<usize> = label.clone();
    ids.sort_unstable();
    ids.dedup();
    for id in ids {
        let members: Vec<C64> = (0..n).filter(|&i| label[i] == id).map(|i| roots[i]).collect();
        let l = members.len();
        groups.push((members.iter().sum::<C64>() / C64::new(l as f64, 0.0), l));
    }
    for (i, a) in groups.iter().enumerate() {
        for b in &groups[i + 1..] {
            if (a.0 - b.0).norm() < ROOT_SEPARATION * scale {
                return Err(MtvError::Conditioning(format!(
                    "eigenvalues {:.3e} and {:.3e} are too close to decide multiplicities",
                    a.0, b.0
                )));
            }
        }
    }
    let rebuilt = slodowy::slice_from_roots(&groups);
    let drift = rebuilt.distance(x);
    if drift > 1e-6 * scale.powi(x.k as i32) {
        return Err(MtvError::Conditioning(format!("merged roots miss the slice point by {drift:e}")));
    }
    groups.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)).then(a.1.cmp(&b.1)));
    Ok(groups)
}

/// Inverse of [`hilb_to_u`]: pieces from the spectral data of `X`, jets
/// from `g T^{-1}` (incoming) and `T' g` (outgoing).
pub fn u_to_hilb(m: &UClass) -> Result<JetScheme> {
    m.validate()?;
    let groups = spectral_data(&m.x)?;
    let lengths: Vec<usize> = groups.iter().map(|g| g.1).collect();
    let blocks: Vec<ComplexMatrix> = groups.iter().map(|&(z, l)| jordan_block(z, l)).collect();
    let j = block_diag(&blocks);
    let (t, tp) = jordan_conjugators(&m.x.embed(), &j, &lengths)?;
    let t_inv = inverse(&t)?;
    let gmats: Vec<ComplexMatrix> = (0..m.n())
        .map(|f| if f < m.b { &m.gs[f] * &t_inv } else { &tp * &m.gs[f] })
        .collect();
    let mut pieces = Vec::with_capacity(groups.len());
    let mut off = 0;
    for &(z, l) in &groups {
        let jets = gmats
            .iter()
            .enumerate()
            .map(|(f, g)| {
                (0..l)
                    .map(|c| {
                        (0..m.k())
                            .map(|r| if f < m.b { g[(r, off + c)] } else { g[(off + c, r)] })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        pieces.push(LocalPiece { z, length: l, jets });
        off += l;
    }
    JetScheme::new(m.k(), m.b, m.bprime, pieces)
}

/// Acts on the jets of factor `j`: vectors by `g x`, covectors by `g^{-T} x`.
pub fn act_on_scheme(d: &JetScheme, j: usize, g: &ComplexMatrix) -> Result<JetScheme> {
    d.check_factor(j)?;
    let g_inv = inverse(g)?;
    let op = match d.orientation(j) {
        Orientation::Incoming => g.clone(),
        Orientation::Outgoing => g_inv.transpose(),
    };
    let mut out = d.clone();
    for p in &mut out.pieces {
        for x in &mut p.jets[j] {
            let v = &op * DVector::from_vec(x.clone());
            *x = v.iter().copied().collect();
        }
    }
    Ok(out)
}

/// `G J G^{-1}` on incoming factors, `-G^{-1} J^T G` on outgoing ones.
pub fn f_moment(d: &JetScheme, j: usize) -> Result<ComplexMatrix> {
    let g = g_matrix(d, j)?;
    let g_inv = inverse(&g)?;
    let jm = jordan_of(d);
    Ok(match d.orientation(j) {
        Orientation::Incoming => &g * jm * g_inv,
        Orientation::Outgoing => -(g_inv * jm.transpose() * &g),
    })
}

/// The lower shift on a block of size `l`.
fn lower_shift(l: usize) -> ComplexMatrix {
    let mut s = linalg::zeros(l);
    for i in 1..l {
        s[(i, i - 1)] = ONE;
    }
    s
}

/// `dJ` for a tangent in the chart `J(c) = J + sum_m c_{i,m} L^m`.
pub fn f_dj(lengths: &[usize], dc: &[Vec<C64>]) -> Result<ComplexMatrix> {
    if dc.len() != lengths.len() || dc.iter().zip(lengths).any(|(v, &l)| v.len() != l) {
        return Err(MtvError::Dimension("tangent does not match piece lengths".into()));
    }
    let blocks: Vec<ComplexMatrix> = dc
        .iter()
        .zip(lengths)
        .map(|(v, &l)| {
            let s = lower_shift(l);
            v.iter()
                .enumerate()
                .fold(linalg::zeros(l), |acc, (m, c)| acc + linalg::matrix_power(&s, m) * *c)
        })
        .collect();
    Ok(block_diag(&blocks))
}

/// The closed 2-form `-d<J, G^{-1}dG>` at a chart point `(G, J)`:
/// `<rho, dmu(v)> - <rho', dmu(u)> - <mu, [rho, rho']>` with `mu = G J G^{-1}`
/// and `dmu = [rho, mu] + G dJ G^{-1}`.
pub fn f_form(
    g: &ComplexMatrix,
    j: &ComplexMatrix,
    lengths: &[usize],
    u: &FTangent,
    v: &FTangent,
) -> Result<C64> {
    let g_inv = inverse(g)?;
    let mu = g * j * &g_inv;
    let dmu = |t: &FTangent| -> Result<ComplexMatrix> {
        Ok(commutator(&t.rho, &mu) + g * f_dj(lengths, &t.dc)? * &g_inv)
    };
    Ok(pair(&u.rho, &dmu(v)?) - pair(&v.rho, &dmu(u)?) - pair(&mu, &commutator(&u.rho, &v.rho)))
}

pub fn f_presymplectic(d: &JetScheme, u: &FTangent, v: &FTangent) -> Result<C64> {
    if (d.b, d.bprime) != (1, 0) {
        return Err(MtvError::Signature("the presymplectic form lives on F^{1,0}".into()));
    }
    f_form(&g_matrix(d, 0)?, &jordan_of(d), &d.lengths(), u, v)
}

/// Coordinate basis of the tangent space: k^2 elementary `rho`, then the
/// piece coefficients.
pub fn f_tangent_basis(d: &JetScheme) -> Vec<FTangent> {
    let k = d.k;
    let mut basis = Vec::new();
    for r in 0..k {
        for c in 0..k {
            let mut t = FTangent::zero(d);
            t.rho = linalg::unit(k, r, c);
            basis.push(t);
        }
    }
    for (i, p) in d.pieces.iter().enumerate() {
        for m in 0..p.length {
            let mut t = FTangent::zero(d);
            t.dc[i][m] = ONE;
            basis.push(t);
        }
    }
    basis
}

/// Dimension of the kernel of the form on the coordinate basis.
pub fn f_kernel_dimension(d: &JetScheme) -> Result<usize> {
    let basis = f_tangent_basis(d);
    let n = basis.len();
    let mut gram = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let w = f_presymplectic(d, &basis[a], &basis[b])?;
            gram[(a, b)] = w;
            gram[(b, a)] = -w;
        }
    }
    Ok(n - linalg::rank(&gram))
}

/// Jordan data `(z, l)` sorted by `(Re z, Im z, l)`.
pub fn orbit_invariant(d: &JetScheme) -> Vec<(C64, usize)> {
    let mut v: Vec<(C64, usize)> = d.pieces.iter().map(|p| (p.z, p.length)).collect();
    v.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)).then(a.1.cmp(&b.1)));
    v
}

pub fn invariants_equal(a: &[(C64, usize)], b: &[(C64, usize)], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.1 == y.1 && (x.0 - y.0).norm() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, r};
    use crate::u::u_equivalent;

    fn e(k: usize, i: usize) -> Vec<C64> {
        (0..k).map(|j| if i == j { ONE } else { ZERO }).collect()
    }

    fn piece(z: C64, jets: Vec<Vec<Vec<C64>>>) -> LocalPiece {
        LocalPiece { z, length: jets[0].len(), jets }
    }

    fn simple(k: usize, zs: &[C64]) -> JetScheme {
        let pieces = zs.iter().enumerate().map(|(i, &z)| piece(z, vec![vec![e(k, i)]])).collect();
        JetScheme::new(k, 1, 0, pieces).unwrap()
    }

    fn full_jet(k: usize, z: C64) -> JetScheme {
        JetScheme::new(k, 1, 0, vec![piece(z, vec![(0..k).map(|m| e(k, m)).collect()])]).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let p = piece(r(0.0), vec![vec![vec![r(3.0), r(0.0)]]]);
        // one factor: trivial jet group
        assert_eq!(jet_normalize(&p).unwrap(), p);
        let q = piece(
            r(0.5),
            vec![
                vec![vec![c(2.0, 1.0), r(0.5)], vec![r(0.3), c(0.0, 1.0)]],
                vec![vec![r(1.0), r(-1.0)], vec![r(0.2), r(0.7)]],
            ],
        );
        let nq = jet_normalize(&q).unwrap();
        assert_eq!(nq.jets[0][0][0], ONE);
        assert!(nq.jets[0][1][0].norm() < 1e-15);
        let again = jet_normalize(&nq).unwrap();
        let d = again.jets.iter().flatten().flatten().zip(nq.jets.iter().flatten().flatten());
        assert!(d.map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) < 1e-14);
        let l1 = vec![c(0.7, 0.2), r(0.4)];
        let l2 = poly_inv(&l1, 2);
        let moved = jet_group_act(&q, &[l1, l2]).unwrap();
        let nm = jet_normalize(&moved).unwrap();
        let d = nm.jets.iter().flatten().flatten().zip(nq.jets.iter().flatten().flatten());
        assert!(d.map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) < 1e-13);
        let zero = piece(r(0.0), vec![vec![vec![r(0.0), r(0.0)]]]);
        assert!(jet_normalize(&zero).is_err());
    }

    #[test]
    fn nondegeneracy_examples() {
        let d = simple(3, &[r(0.0), r(1.0), r(2.0)]);
        assert!(nondegenerate(&d) && locally_nondegenerate(&d));
        let same = JetScheme::new(
            2,
            1,
            0,
            vec![piece(r(0.0), vec![vec![e(2, 0)]]), piece(r(1.0), vec![vec![vec![r(2.0), r(0.0)]]])],
        )
        .unwrap();
        assert!(!nondegenerate(&same));
        assert!(locally_nondegenerate(&same));
        assert!(nondegenerate(&full_jet(3, r(0.0))));
        let broken = JetScheme::new(2, 1, 0, vec![piece(r(0.0), vec![vec![e(2, 0), vec![r(0.0), r(0.0)]]])]).unwrap();
        assert!(!locally_nondegenerate(&broken));
    }

    #[test]
    fn validation_examples() {
        assert!(fitting_transverse(&simple(2, &[r(0.0), r(1.0)])).unwrap());
        assert!(JetScheme::new(3, 1, 0, vec![piece(r(0.0), vec![vec![e(3, 0)]])]).is_err());
        assert!(JetScheme::new(1, 2, 0, vec![piece(r(0.0), vec![vec![e(1, 0)]])]).is_err());
    }

    #[test]
    fn jordan_examples() {
        let d = simple(3, &[r(2.0), r(0.0), r(1.0)]);
        let j = jordan_of(&d);
        assert_eq!(j, DMatrix::from_diagonal(&DVector::from_vec(vec![r(0.0), r(1.0), r(2.0)])));
        assert_eq!(jordan_of(&full_jet(3, r(0.5))), jordan_block(r(0.5), 3));
        let d = JetScheme::new(
            3,
            1,
            0,
            vec![piece(r(1.0), vec![vec![e(3, 2)]]), piece(r(0.0), vec![vec![e(3, 0), e(3, 1)]])],
        )
        .unwrap();
        let mut expect = jordan_block(r(0.0), 3);
        expect[(1, 2)] = ZERO;
        expect[(2, 2)] = r(1.0);
        assert_eq!(jordan_of(&d), expect);
    }

    #[test]
    fn g_matrix_examples() {
        assert_eq!(g_matrix(&full_jet(3, r(0.0)), 0).unwrap(), linalg::identity(3));
        let d = JetScheme::new(1, 1, 0, vec![piece(r(0.0), vec![vec![vec![c(2.0, 1.0)]]])]).unwrap();
        assert_eq!(g_matrix(&d, 0).unwrap()[(0, 0)], c(2.0, 1.0));
        let d = simple(2, &[r(1.0), r(0.0)]);
        // the piece at 0 carried e_1 and comes first after sorting
        assert_eq!(g_matrix(&d, 0).unwrap(), linalg::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn hilb_to_u_examples() {
        let z = c(0.3, -0.2);
        let d = JetScheme::new(1, 1, 0, vec![piece(z, vec![vec![vec![c(2.0, 1.0)]]])]).unwrap();
        let m = hilb_to_u(&d).unwrap();
        assert!((m.gs[0][(0, 0)] - c(2.0, 1.0)).norm() < 1e-15);
        assert!((m.x.coeffs[0] - z).norm() < 1e-15);
        let d = JetScheme::new(
            2,
            1,
            0,
            vec![piece(z, vec![vec![vec![r(1.0), r(0.5)], vec![r(-0.2), r(1.0)]]])],
        )
        .unwrap();
        let m = hilb_to_u(&d).unwrap();
        let cp = linalg::char_poly(&m.x.embed());
        assert!((cp[1] + z * 2.0).norm() < 1e-14 && (cp[2] - z * z).norm() < 1e-14);
        let mu = crate::u::u_moment(&m, 0).unwrap();
        assert!(linalg::max_abs(&(mu - f_moment(&d, 0).unwrap())) < 1e-13);
    }

    #[test]
    fn jet_group_maps_to_relation() {
        let d = JetScheme::new(
            2,
            1,
            1,
            vec![
                piece(r(0.0), vec![vec![vec![r(1.0), r(0.2)]], vec![vec![r(0.5), r(1.0)]]]),
                piece(r(1.0), vec![vec![vec![r(-0.3), r(1.0)]], vec![vec![r(1.0), r(0.1)]]]),
            ],
        )
        .unwrap();
        let mut moved = d.clone();
        for p in &mut moved.pieces {
            let l = vec![c(1.5, 0.5)];
            let li = poly_inv(&l, 1);
            *p = jet_group_act(p, &[l, li]).unwrap();
        }
        let (m1, m2) = (hilb_to_u(&d).unwrap(), hilb_to_u(&moved).unwrap());
        assert!(u_equivalent(&m1, &m2).unwrap());
        let back = u_to_hilb(&m1).unwrap();
        assert!(jet_equivalent(&back, &d, 1e-9).unwrap());
    }

    #[test]
    fn u_to_hilb_examples() {
        let m = UClass::new(1, 0, vec![DMatrix::from_element(1, 1, c(0.4, 0.1))], SlicePoint::new(vec![r(2.0)]).unwrap()).unwrap();
        let d = u_to_hilb(&m).unwrap();
        assert_eq!(d.pieces.len(), 1);
        assert!((d.pieces[0].z - r(2.0)).norm() < 1e-15);
        assert!((d.pieces[0].jets[0][0][0] - c(0.4, 0.1)).norm() < 1e-15);
        let x = slodowy::slice_from_roots(&[(r(0.0), 1), (r(1.0), 1), (c(0.0, 2.0), 1)]);
        let m = UClass::new(1, 0, vec![linalg::identity(3)], x).unwrap();
        let d = u_to_hilb(&m).unwrap();
        assert_eq!(d.lengths(), vec![1, 1, 1]);
        let x = slodowy::slice_from_roots(&[(r(0.5), 3), (r(-1.0), 1)]);
        let m = UClass::new(1, 1, vec![linalg::identity(4), linalg::identity(4)], x).unwrap();
        let d = u_to_hilb(&m).unwrap();
        assert_eq!(d.lengths(), vec![1, 3]);
        assert!(u_equivalent(&hilb_to_u(&d).unwrap(), &m).unwrap());
    }

    #[test]
    fn moment_examples() {
        assert_eq!(f_moment(&full_jet(3, r(0.5)), 0).unwrap(), jordan_block(r(0.5), 3));
        let d = simple(2, &[r(1.0), r(0.0)]);
        let mu = f_moment(&d, 0).unwrap();
        assert!(linalg::max_abs(&(mu - linalg::from_real_rows(2, &[1.0, 0.0, 0.0, 0.0]))) < 1e-15);
        let g = linalg::from_real_rows(2, &[1.0, 2.0, 0.5, 1.5]);
        let moved = act_on_scheme(&d, 0, &g).unwrap();
        let expect = &g * f_moment(&d, 0).unwrap() * inverse(&g).unwrap();
        assert!(linalg::max_abs(&(f_moment(&moved, 0).unwrap() - expect)) < 1e-13);
    }

    #[test]
    fn presymplectic_examples() {
        let d = full_jet(2, r(0.3));
        let u = FTangent { rho: linalg::from_real_rows(2, &[0.1, 0.2, 0.3, 0.4]), dc: vec![vec![r(1.0), r(0.5)]] };
        assert_eq!(f_presymplectic(&d, &u, &u).unwrap(), ZERO);
        let a = FTangent::eigen(linalg::zeros(2), &[r(1.0)], &d);
        let b = FTangent::eigen(linalg::zeros(2), &[c(0.0, 2.0)], &d);
        assert_eq!(f_presymplectic(&d, &a, &b).unwrap(), ZERO);
        assert_eq!(f_kernel_dimension(&d).unwrap(), 0);
        assert_eq!(f_kernel_dimension(&simple(2, &[r(0.0), r(1.0)])).unwrap(), 0);
        // two blocks over one point: in F, not in U
        let stacked = simple(2, &[r(0.0), r(0.0)]);
        assert!(in_f_locus(&stacked).unwrap() && !in_u_locus(&stacked));
        assert!(f_kernel_dimension(&stacked).unwrap() > 0);
    }

    #[test]
    fn stabilizer_examples() {
        let d = simple(2, &[r(0.0), r(1.0)]);
        assert_eq!(stabilizer_dimension(&d, 0).unwrap(), 0);
        let same = JetScheme::new(
            2,
            1,
            0,
            vec![piece(r(0.0), vec![vec![e(2, 0)]]), piece(r(1.0), vec![vec![e(2, 0)]])],
        )
        .unwrap();
        assert!(stabilizer_dimension(&same, 0).unwrap() > 0);
        assert!(!in_f_locus(&same).unwrap());
    }

    #[test]
    fn invariant_examples() {
        let d = simple(3, &[r(2.0), r(0.0), r(1.0)]);
        assert_eq!(orbit_invariant(&d), vec![(r(0.0), 1), (r(1.0), 1), (r(2.0), 1)]);
        assert_eq!(orbit_invariant(&full_jet(3, r(0.5))), vec![(r(0.5), 3)]);
        let g = linalg::from_real_rows(3, &[1.0, 2.0, 0.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0]);
        assert_eq!(orbit_invariant(&act_on_scheme(&d, 0, &g).unwrap()), orbit_invariant(&d));
    }

    #[test]
    fn json_schema() {
        let d = simple(2, &[r(0.0), c(1.0, 1.0)]);
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["pieces"][1]["z"], serde_json::json!([1.0, 1.0]));
        assert_eq!(v["pieces"][0]["len"], 1);
        assert_eq!(v["pieces"][0]["jets"][0][0][0], serde_json::json!([1.0, 0.0]));
        let back: JetScheme = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(back, d);
        let mut bad = v;
        bad["k"] = serde_json::json!(3);
        assert!(serde_json::from_value::<JetScheme>(bad).is_err());
    }
}
