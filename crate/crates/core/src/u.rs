//! The quotients `U^{b,b'} = Y / R` with `Y = G^{b+b'} x S`.
//!
//! A class is stored through one representative `(g_1, ..., g_{b+b'}, X)`,
//! incoming factors first. Two representatives are identified when
//! `u_i = h_i^{-1} g_i` (incoming) and `u_i = g_i h_i^{-1}` (outgoing) all
//! centralize `X` and multiply to the identity. The centralizer of a regular
//! element of gl(k) is abelian, so the order of the product is immaterial.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MtvError, Result};
use crate::lie::{self, pair, AElement};
use crate::linalg::{self, commutator, inverse, ComplexMatrix, C64};
use crate::slodowy::{self, SlicePoint};
use crate::w::{self, Orientation, WPoint, WTangent};

/// Slice points handed to [`u_build`] must agree to this coefficient distance.
pub const BUILD_TOL: f64 = 1e-12;
/// Bound on `||[u_i, X]||` and `||prod u_i - I||` in [`u_equivalent`],
/// relative to `1 + ||X||` and `1 + max ||g_i||` respectively.
pub const EQUIV_TOL: f64 = 1e-9;
/// Absolute entrywise tolerance on the gluing moment condition.
pub const GLUE_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-10;
pub const DET_TOL: f64 = 1e-9;
pub const W00_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UClass {
    pub b: usize,
    pub bprime: usize,
    #[serde(with = "crate::json::matrices")]
    pub gs: Vec<ComplexMatrix>,
    #[serde(rename = "X")]
    pub x: SlicePoint,
}

/// Left-logarithmic directions `g_i^{-1} dg_i` and a shared slice direction.
#[derive(Debug, Clone, PartialEq)]
pub struct UTangent {
    pub a: Vec<ComplexMatrix>,
    pub dc: Vec<C64>,
}

impl UTangent {
    pub fn zero(n: usize, k: usize) -> Self {
        Self { a: vec![linalg::zeros(k); n], dc: vec![C64::new(0.0, 0.0); k] }
    }

    fn factor(&self, i: usize) -> WTangent {
        WTangent { a: self.a[i].clone(), dc: self.dc.clone() }
    }
}

/// A point of `W^{0,0} = {(g, X) : Ad(g)X = X}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W00Point {
    #[serde(with = "crate::json::matrix")]
    pub g: ComplexMatrix,
    #[serde(rename = "X")]
    pub x: SlicePoint,
}

impl W00Point {
    pub fn new(g: ComplexMatrix, x: SlicePoint) -> Result<Self> {
        let p = Self { g, x };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.x.validate()?;
        let k = linalg::check_square(&self.g, "g")?;
        if k != self.x.k {
            return Err(MtvError::Dimension("g and X sizes differ".into()));
        }
        inverse(&self.g)?;
        let x = self.x.embed();
        let drift = linalg::max_abs(&(&self.g * &x - &x * &self.g));
        if drift > W00_TOL * (1.0 + linalg::norm(&self.g)) {
            return Err(MtvError::Validation(format!("g does not centralize X ({drift:e})")));
        }
        Ok(())
    }
}

impl UClass {
    pub fn new(b: usize, bprime: usize, gs: Vec<ComplexMatrix>, x: SlicePoint) -> Result<Self> {
        let m = Self { b, bprime, gs, x };
        m.validate()?;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.b + self.bprime
    }

    pub fn k(&self) -> usize {
        self.x.k
    }

    pub fn validate(&self) -> Result<()> {
        self.x.validate()?;
        if self.n() == 0 {
            return Err(MtvError::Signature("signature (0,0) is represented by W00Point".into()));
        }
        if self.gs.len() != self.n() {
            return Err(MtvError::Signature(format!(
                "{} group elements for signature ({}, {})",
                self.gs.len(),
                self.b,
                self.bprime
            )));
        }
        for (i, g) in self.gs.iter().enumerate() {
            let k = linalg::check_square(g, "g_i")?;
            if k != self.x.k {
                return Err(MtvError::Dimension(format!("g_{i} is {k}x{k}, X has k = {}", self.x.k)));
            }
            if !linalg::is_finite(g) {
                return Err(MtvError::Dimension(format!("non-finite entries in g_{i}")));
            }
            inverse(g).map_err(|_| MtvError::Singular(format!("g_{i} is singular")))?;
        }
        Ok(())
    }

    pub fn orientation(&self, i: usize) -> Orientation {
        if i < self.b {
            Orientation::Incoming
        } else {
            Orientation::Outgoing
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(MtvError::Index(format!("factor {i} of {}", self.n())));
        }
        Ok(())
    }

    /// The `i`-th factor as a point of `W^{1,0}` or `W^{0,1}`.
    pub fn factor(&self, i: usize) -> Result<WPoint> {
        self.check_index(i)?;
        Ok(WPoint { orientation: self.orientation(i), g: self.gs[i].clone(), x: self.x.clone() })
    }
}

pub fn u_build(points: &[WPoint]) -> Result<UClass> {
    let first = points
        .first()
        .ok_or_else(|| MtvError::Signature("no points given".into()))?;
    let mut b = 0;
    let mut seen_out = false;
    for p in points {
        p.validate()?;
        match p.orientation {
            Orientation::Incoming if seen_out => {
                return Err(MtvError::Signature("incoming points must precede outgoing ones".into()))
            }
            Orientation::Incoming => b += 1,
            Orientation::Outgoing => seen_out = true,
        }
        if p.x.k != first.x.k || p.x.distance(&first.x) > BUILD_TOL {
            return Err(MtvError::LevelSet("slice points differ between factors".into()));
        }
    }
    UClass::new(
        b,
        points.len() - b,
        points.iter().map(|p| p.g.clone()).collect(),
        first.x.clone(),
    )
}

fn same_signature(m1: &UClass, m2: &UClass) -> Result<()> {
    if (m1.b, m1.bprime, m1.k()) != (m2.b, m2.bprime, m2.k()) {
        return Err(MtvError::Signature(format!(
            "({}, {}) with k = {} against ({}, {}) with k = {}",
            m1.b,
            m1.bprime,
            m1.k(),
            m2.b,
            m2.bprime,
            m2.k()
        )));
    }
    Ok(())
}

/// The relation elements `u_i` taking the representative `h` to `g`.
fn relation_elements(g: &UClass, h: &UClass) -> Result<Vec<ComplexMatrix>> {
    (0..g.n())
        .map(|i| {
            let h_inv = inverse(&h.gs[i])?;
            Ok(if i < g.b { h_inv * &g.gs[i] } else { &g.gs[i] * h_inv })
        })
        .collect()
}

fn product(ms: &[ComplexMatrix], k: usize) -> ComplexMatrix {
    ms.iter().fold(linalg::identity(k), |acc, u| acc * u)
}

fn g_scale(m: &UClass) -> f64 {
    m.gs.iter().map(linalg::norm).fold(1.0, f64::max)
}

/// How far two representatives are from being related. With
/// `u_i = h_i^{-1} g_i` (or `g_i h_i^{-1}`) and `c_i = ||h_i^{-1}|| ||g_i||`,
/// the rounding scale of `u_i`, this is the largest of the slice distance,
/// `||[u_i, X]|| / ((1 + ||X||) c_i)` and
/// `||prod u_i - I|| / (sum_i c_i prod_j max(1, ||u_j||))`.
/// [`u_equivalent`] compares it with [`EQUIV_TOL`].
pub fn equivalence_residual(m1: &UClass, m2: &UClass) -> Result<f64> {
    same_signature(m1, m2)?;
    let x = m1.x.embed();
    let x_scale = 1.0 + linalg::norm(&x);
    let mut worst = m1.x.distance(&m2.x) / x_scale;
    let us = relation_elements(m1, m2)?;
    let mut spread = 1.0;
    let mut cond_sum = 0.0;
    for (i, u) in us.iter().enumerate() {
        let c = linalg::norm(&inverse(&m2.gs[i])?) * linalg::norm(&m1.gs[i]);
        worst = worst.max(lie::commutator_norm(u, &x) / (x_scale * c));
        cond_sum += c;
        spread *= linalg::norm(u).max(1.0);
    }
    let prod = product(&us, m1.k());
    Ok(worst.max(linalg::norm(&(prod - linalg::identity(m1.k()))) / (cond_sum * spread)))
}

pub fn u_equivalent(m1: &UClass, m2: &UClass) -> Result<bool> {
    Ok(equivalence_residual(m1, m2)? <= EQUIV_TOL)
}

pub fn u_moment(m: &UClass, i: usize) -> Result<ComplexMatrix> {
    w::w_moment(&m.factor(i)?)
}

/// Largest discrepancy between the power traces of `mu_i` and of `-mu'_j`.
pub fn axiom_d_residual(m: &UClass) -> Result<f64> {
    let points = (0..m.n()).map(|i| m.factor(i)).collect::<Result<Vec<_>>>()?;
    axiom_d_residual_points(&points)
}

/// The same quantity for factor data that need not share a slice point.
pub fn axiom_d_residual_points(points: &[WPoint]) -> Result<f64> {
    let mut traces = Vec::with_capacity(points.len());
    for p in points {
        let mu = w::w_moment(p)?;
        // outgoing moments enter through -mu'
        let y = if p.orientation == Orientation::Incoming { mu } else { -mu };
        traces.push(w::moment_coordinates(&y)?);
    }
    let mut worst: f64 = 0.0;
    for t in traces.iter().skip(1) {
        if t.len() != traces[0].len() {
            return Err(MtvError::Dimension("factors of different size".into()));
        }
        for (a, b) in traces[0].iter().zip(t) {
            worst = worst.max((a - b).norm());
        }
    }
    Ok(worst)
}

/// `g_i -> g0 g_i` on an incoming factor, `g_i -> g_i g0^{-1}` on an
/// outgoing one; either way `mu_i -> Ad(g0) mu_i`.
pub fn g_action(m: &UClass, i: usize, g0: &ComplexMatrix) -> Result<UClass> {
    let moved = m.factor(i)?.act(g0)?;
    let mut out = m.clone();
    out.gs[i] = moved.g;
    Ok(out)
}

fn check_permutation(p: &[usize], n: usize, what: &str) -> Result<()> {
    let mut seen = vec![false; n];
    if p.len() != n {
        return Err(MtvError::Permutation(format!("{what} has length {} instead of {n}", p.len())));
    }
    for &j in p {
        if j >= n || seen[j] {
            return Err(MtvError::Permutation(format!("{what} is not a permutation of 0..{n}")));
        }
        seen[j] = true;
    }
    Ok(())
}

/// Moves incoming factor `i` to slot `sigma[i]` and outgoing factor `j` to
/// slot `b + tau[j]`.
pub fn perm_action(m: &UClass, sigma: &[usize], tau: &[usize]) -> Result<UClass> {
    check_permutation(sigma, m.b, "sigma")?;
    check_permutation(tau, m.bprime, "tau")?;
    let mut gs = m.gs.clone();
    for (i, &s) in sigma.iter().enumerate() {
        gs[s] = m.gs[i].clone();
    }
    for (j, &t) in tau.iter().enumerate() {
        gs[m.b + t] = m.gs[m.b + j].clone();
    }
    Ok(UClass { gs, ..m.clone() })
}

/// The A-action factor by factor; elements of `A_0` fix the class.
pub fn a_action(m: &UClass, a: &AElement) -> Result<UClass> {
    if a.factors.len() != m.n() {
        return Err(MtvError::Signature("A-element has the wrong number of factors".into()));
    }
    let mut out = m.clone();
    for (i, terms) in a.factors.iter().enumerate() {
        out.gs[i] = w::a_action(terms, &m.factor(i)?)?.g;
    }
    Ok(out)
}

fn check_u_tangent(m: &UClass, t: &UTangent) -> Result<()> {
    if t.a.len() != m.n() || t.dc.len() != m.k() {
        return Err(MtvError::Signature("tangent does not match the class signature".into()));
    }
    Ok(())
}

/// The symplectic form on `U^{b,b'}`: the sum of the factor forms sharing
/// the single slice direction.
pub fn u_symplectic(m: &UClass, u: &UTangent, v: &UTangent) -> Result<C64> {
    check_u_tangent(m, u)?;
    check_u_tangent(m, v)?;
    let mut s = C64::new(0.0, 0.0);
    for i in 0..m.n() {
        s += w::w_symplectic(&m.factor(i)?, &u.factor(i), &v.factor(i))?;
    }
    Ok(s)
}

fn require_incoming_only(m: &UClass) -> Result<()> {
    if m.bprime != 0 {
        return Err(MtvError::Signature("the printed expressions cover U^{b,0}".into()));
    }
    Ok(())
}

/// `-<dX ^ sum g_i^{-1}dg_i> + <X, sum g_i^{-1}dg_i ^ g_i^{-1}dg_i>` with the
/// graded bracket, on `U^{b,0}`.
pub fn u_symplectic_printed(m: &UClass, u: &UTangent, v: &UTangent) -> Result<C64> {
    require_incoming_only(m)?;
    check_u_tangent(m, u)?;
    check_u_tangent(m, v)?;
    let x = m.x.embed();
    let (dxu, dxv) = (SlicePoint::direction(m.k(), &u.dc), SlicePoint::direction(m.k(), &v.dc));
    let sum_u = u.a.iter().fold(linalg::zeros(m.k()), |acc, a| acc + a);
    let sum_v = v.a.iter().fold(linalg::zeros(m.k()), |acc, a| acc + a);
    let mut brackets = linalg::zeros(m.k());
    for (au, av) in u.a.iter().zip(&v.a) {
        brackets += commutator(au, av) - commutator(av, au);
    }
    Ok(-(pair(&dxu, &sum_v) - pair(&dxv, &sum_u)) + pair(&x, &brackets))
}

/// `sum_i <dg_i g_i^{-1} ^ d(Ad(g_i)X)>` on `U^{b,0}`.
pub fn u_symplectic_rewritten(m: &UClass, u: &UTangent, v: &UTangent) -> Result<C64> {
    require_incoming_only(m)?;
    check_u_tangent(m, u)?;
    check_u_tangent(m, v)?;
    let mut s = C64::new(0.0, 0.0);
    for i in 0..m.n() {
        s += w::eq1_rhs(&m.factor(i)?, &u.factor(i), &v.factor(i))?;
    }
    Ok(s)
}

/// Coordinate basis of `T Y`: for each factor the k^2 elementary directions
/// of `a_i`, then the k slice directions.
pub fn tangent_basis(m: &UClass) -> Vec<UTangent> {
    let (n, k) = (m.n(), m.k());
    let mut basis = Vec::with_capacity(n * k * k + k);
    for i in 0..n {
        for r in 0..k {
            for c in 0..k {
                let mut t = UTangent::zero(n, k);
                t.a[i] = linalg::unit(k, r, c);
                basis.push(t);
            }
        }
    }
    for j in 0..k {
        let mut t = UTangent::zero(n, k);
        t.dc[j] = C64::new(1.0, 0.0);
        basis.push(t);
    }
    basis
}

pub fn u_gram(m: &UClass) -> Result<DMatrix<C64>> {
    let basis = tangent_basis(m);
    let d = basis.len();
    let mut gram = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in (i + 1)..d {
            let w = u_symplectic(m, &basis[i], &basis[j])?;
            gram[(i, j)] = w;
            gram[(j, i)] = -w;
        }
    }
    Ok(gram)
}

/// Dimension of `U^{b,b'}`: `dim Y - dim A_0`.
pub fn u_dimension(m: &UClass) -> usize {
    let (n, k) = (m.n(), m.k());
    n * k * k + k - k * (n - 1)
}

/// Rank of the form on `T Y`; nondegeneracy on the quotient means this
/// equals [`u_dimension`], the kernel being the `A_0` directions.
pub fn u_form_rank(m: &UClass) -> Result<usize> {
    Ok(linalg::rank(&u_gram(m)?))
}

/// Removes the outgoing factor `p_out` of `m1` and the incoming factor
/// `q_in` of `m2`, reducing by the diagonal action on that pair.
///
/// The centralizer element `w = g_{p'} h_q` is absorbed into the first
/// remaining factor; see [`glue_with_absorber`].
pub fn glue(m1: &UClass, p_out: usize, m2: &UClass, q_in: usize) -> Result<UClass> {
    glue_with_absorber(m1, p_out, m2, q_in, 0)
}

/// Indices of the factors that survive gluing, in result order, tagged with
/// the input they come from.
fn glue_layout(m1: &UClass, p_out: usize, m2: &UClass, q_in: usize) -> Vec<(usize, usize)> {
    let mut layout = Vec::new();
    layout.extend((0..m1.b).map(|i| (1, i)));
    layout.extend((0..m2.b).filter(|&i| i != q_in).map(|i| (2, i)));
    layout.extend((m1.b..m1.n()).filter(|&i| i != m1.b + p_out).map(|i| (1, i)));
    layout.extend((m2.b..m2.n()).map(|i| (2, i)));
    layout
}

/// [`glue`] with the centralizer element absorbed into result factor
/// `absorber` (right multiplication on incoming factors, left on outgoing).
pub fn glue_with_absorber(
    m1: &UClass,
    p_out: usize,
    m2: &UClass,
    q_in: usize,
    absorber: usize,
) -> Result<UClass> {
    m1.validate()?;
    m2.validate()?;
    if p_out >= m1.bprime {
        return Err(MtvError::Index(format!("outgoing index {p_out} of {}", m1.bprime)));
    }
    if q_in >= m2.b {
        return Err(MtvError::Index(format!("incoming index {q_in} of {}", m2.b)));
    }
    if m1.k() != m2.k() {
        return Err(MtvError::Dimension("classes of different size".into()));
    }
    let g_p = &m1.gs[m1.b + p_out];
    let h_q = &m2.gs[q_in];
    let mismatch = u_moment(m1, m1.b + p_out)? + u_moment(m2, q_in)?;
    if linalg::max_abs(&mismatch) > GLUE_TOL {
        return Err(MtvError::Gluing(format!(
            "moment maps do not cancel (residual {:e})",
            linalg::max_abs(&mismatch)
        )));
    }
    if m1.x.distance(&m2.x) > GLUE_TOL {
        return Err(MtvError::Gluing("slice parts differ".into()));
    }
    // after the gauge g_{p'} -> 1 the incoming partner becomes w in Z(X),
    // and the relation moves w onto any other factor
    let w = g_p * h_q;
    let layout = glue_layout(m1, p_out, m2, q_in);
    if layout.is_empty() {
        return Err(MtvError::Signature(
            "gluing (1,0) against (0,1) gives W^{0,0}; use w00_from_glue".into(),
        ));
    }
    if absorber >= layout.len() {
        return Err(MtvError::Index(format!("absorber {absorber} of {}", layout.len())));
    }
    let b = m1.b + m2.b - 1;
    let mut gs = Vec::with_capacity(layout.len());
    for (slot, &(src, i)) in layout.iter().enumerate() {
        let g = if src == 1 { &m1.gs[i] } else { &m2.gs[i] };
        gs.push(if slot != absorber {
            g.clone()
        } else if slot < b {
            g * &w
        } else {
            &w * g
        });
    }
    UClass::new(b, layout.len() - b, gs, m1.x.clone())
}

/// Gluing an incoming `(g, X)` against an outgoing `(h, X)`: the product
/// `h g` centralizes `X`.
pub fn w00_from_glue(incoming: &UClass, outgoing: &UClass) -> Result<W00Point> {
    if (incoming.b, incoming.bprime) != (1, 0) || (outgoing.b, outgoing.bprime) != (0, 1) {
        return Err(MtvError::Signature("expected a (1,0) class and a (0,1) class".into()));
    }
    let mismatch = u_moment(incoming, 0)? + u_moment(outgoing, 0)?;
    if linalg::max_abs(&mismatch) > GLUE_TOL || incoming.x.distance(&outgoing.x) > GLUE_TOL {
        return Err(MtvError::Gluing("moment maps do not cancel".into()));
    }
    W00Point::new(&outgoing.gs[0] * &incoming.gs[0], incoming.x.clone())
}

/// `[g_1, g_2, X] -> (g_1 g_2, Ad(g_1) X)`.
pub fn u11_to_tstar(m: &UClass) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if (m.b, m.bprime) != (1, 1) {
        return Err(MtvError::Signature("expected a (1,1) class".into()));
    }
    Ok((&m.gs[0] * &m.gs[1], u_moment(m, 0)?))
}

/// Inverse of [`u11_to_tstar`] on `G x g^reg`.
pub fn tstar_to_u11(g: &ComplexMatrix, y: &ComplexMatrix) -> Result<UClass> {
    inverse(g)?;
    let x = slodowy::slice_representative(y)?;
    let xe = x.embed();
    let v = linalg::cyclic_vector(&xe)?;
    let w = linalg::cyclic_vector(y)?;
    let g1 = linalg::krylov_conjugator(&xe, &v, y, &w)?;
    let g2 = inverse(&g1)? * g;
    UClass::new(1, 1, vec![g1, g2], x)
}

/// `tr X = 0` and `prod det(g_in) prod det(g_out)^{-1} = 1`.
pub fn sl_membership(m: &UClass) -> bool {
    let tr = linalg::trace(&m.x.embed());
    if tr.norm() > TRACE_TOL {
        return false;
    }
    let mut d = C64::new(1.0, 0.0);
    for (i, g) in m.gs.iter().enumerate() {
        let dg = linalg::det(g);
        d = if i < m.b { d * dg } else { d / dg };
    }
    (d - C64::new(1.0, 0.0)).norm() <= DET_TOL
}

/// The map to `{(X, y_1, ..., y_n) : y_i in O(X)}`.
pub fn fibration_data(m: &UClass) -> Result<(SlicePoint, Vec<ComplexMatrix>)> {
    let mus = (0..m.n()).map(|i| u_moment(m, i)).collect::<Result<Vec<_>>>()?;
    Ok((m.x.clone(), mus))
}

/// For two classes in the same fibre, the centralizer element
/// `prod u_i` separating them; the classes coincide iff it is the identity.
pub fn fibre_element(m1: &UClass, m2: &UClass) -> Result<ComplexMatrix> {
    same_signature(m1, m2)?;
    let x = m1.x.embed();
    let scale = 1.0 + linalg::norm(&x);
    if m1.x.distance(&m2.x) > EQUIV_TOL * scale {
        return Err(MtvError::LevelSet("classes lie over different slice points".into()));
    }
    let us = relation_elements(m1, m2)?;
    for (i, u) in us.iter().enumerate() {
        if lie::commutator_norm(u, &x) > EQUIV_TOL * scale * g_scale(m1) * g_scale(m2) {
            return Err(MtvError::LevelSet(format!("moment {i} differs")));
        }
    }
    Ok(product(&us, m1.k()))
}

/// Moves incoming factor `i` to the end of the outgoing range through
/// `phi_E`; the slice part is fixed by `phi_E`.
pub fn u_flip(m: &UClass, i: usize) -> Result<UClass> {
    if i >= m.b {
        return Err(MtvError::Index(format!("incoming index {i} of {}", m.b)));
    }
    let image = w::phi_e(&m.factor(i)?)?;
    if image.x.distance(&m.x) > BUILD_TOL {
        return Err(MtvError::LevelSet("phi_E moved the slice point".into()));
    }
    let mut gs: Vec<ComplexMatrix> = m.gs.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, g)| g.clone()).collect();
    gs.push(image.g);
    UClass::new(m.b - 1, m.bprime + 1, gs, m.x.clone())
}

/// Dimension of the infinitesimal stabilizer of the class under the
/// G-factor `factor`.
///
/// Unknowns are `xi` in gl(k) acting on that factor and `eta_i` in
/// `Z(X) = span{X^0, ..., X^{k-1}}` moving along the relation; the equations
/// say the moved representative equals the relation-moved one and
/// `sum eta_i = 0`. With `require_product` false the last condition is
/// dropped, which is the negative control.
pub fn stabilizer_dimension(m: &UClass, factor: usize, require_product: bool) -> Result<usize> {
    m.check_index(factor)?;
    let (n, k) = (m.n(), m.k());
    let kk = k * k;
    let x = m.x.embed();
    let powers: Vec<ComplexMatrix> = (0..k).map(|j| linalg::matrix_power(&x, j)).collect();
    // the power basis is badly conditioned for larger k
    let powers = linalg::orthonormal_span(&powers);
    let unknowns = kk + n * k;
    let rows = n * kk + if require_product { k } else { 0 };
    let mut sys = DMatrix::<C64>::zeros(rows, unknowns);
    for i in 0..n {
        let g = &m.gs[i];
        let incoming = i < m.b;
        // incoming: xi g - g eta = 0; outgoing: g xi + eta g = 0
        if i == factor {
            let op = if incoming { linalg::right_mul_op(g) } else { linalg::left_mul_op(g) };
            sys.view_mut((i * kk, 0), (kk, kk)).copy_from(&op);
        }
        for (j, p) in powers.iter().enumerate() {
            let col = if incoming { -(g * p) } else { p * g };
            let v: DVector<C64> = linalg::vec_of(&col);
            sys.view_mut((i * kk, kk + i * k + j), (kk, 1)).copy_from(&v);
        }
    }
    if require_product {
        for i in 0..n {
            for j in 0..k {
                sys[(n * kk + j, kk + i * k + j)] = C64::new(1.0, 0.0);
            }
        }
    }
    linalg::normalize_columns(&mut sys);
    Ok(linalg::kernel(&sys).ncols())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::InvariantPolynomial;
    use crate::linalg::{c, from_real_rows, r};

    fn x2() -> SlicePoint {
        SlicePoint::new(vec![c(0.3, 0.1), c(-0.5, 0.2)]).unwrap()
    }

    fn ga() -> ComplexMatrix {
        from_real_rows(2, &[1.0, 0.4, -0.3, 1.2])
    }

    fn gb() -> ComplexMatrix {
        from_real_rows(2, &[0.8, 0.0, 0.6, 1.1])
    }

    fn central(x: &SlicePoint, t: C64) -> ComplexMatrix {
        let p = InvariantPolynomial::new(2, t).unwrap();
        linalg::expm(&lie::polarized_gradient(&p, &x.embed()).unwrap())
    }

    #[test]
    fn build_examples() {
        let pin = WPoint::new(Orientation::Incoming, ga(), x2()).unwrap();
        let pout = WPoint::new(Orientation::Outgoing, gb(), x2()).unwrap();
        let m = u_build(&[pin.clone()]).unwrap();
        assert_eq!((m.b, m.bprime), (1, 0));
        let m = u_build(&[pin.clone(), pout.clone()]).unwrap();
        assert_eq!((m.b, m.bprime), (1, 1));
        let other = WPoint::new(Orientation::Outgoing, gb(), SlicePoint::origin(2)).unwrap();
        assert!(matches!(u_build(&[pin.clone(), other]), Err(MtvError::LevelSet(_))));
        assert!(u_build(&[pout, pin]).is_err());
    }

    #[test]
    fn equivalence_examples() {
        let m = UClass::new(2, 0, vec![ga(), gb()], x2()).unwrap();
        assert!(u_equivalent(&m, &m).unwrap());
        let u = central(&m.x, c(0.4, -0.3));
        let moved = UClass::new(2, 0, vec![ga() * &u, gb() * inverse(&u).unwrap()], x2()).unwrap();
        assert!(u_equivalent(&moved, &m).unwrap());
        let only_one = UClass::new(2, 0, vec![ga() * &u, gb()], x2()).unwrap();
        assert!(!u_equivalent(&only_one, &m).unwrap());
        let elsewhere = UClass::new(2, 0, vec![ga(), gb()], SlicePoint::origin(2)).unwrap();
        assert!(!u_equivalent(&elsewhere, &m).unwrap());
        let sig = UClass::new(1, 1, vec![ga(), gb()], x2()).unwrap();
        assert!(u_equivalent(&sig, &m).is_err());
    }

    #[test]
    fn moments_and_axiom_d() {
        let m = UClass::new(1, 1, vec![linalg::identity(2), linalg::identity(2)], x2()).unwrap();
        assert_eq!(u_moment(&m, 0).unwrap(), x2().embed());
        assert_eq!(u_moment(&m, 1).unwrap(), -x2().embed());
        assert!(u_moment(&m, 2).is_err());
        let m = UClass::new(2, 1, vec![ga(), gb(), ga() * gb()], x2()).unwrap();
        assert!(axiom_d_residual(&m).unwrap() < 1e-12);
        let u = central(&m.x, r(0.7));
        let m2 = UClass::new(2, 1, vec![ga() * &u, gb(), inverse(&u).unwrap() * ga() * gb()], x2()).unwrap();
        for i in 0..3 {
            let d = u_moment(&m, i).unwrap() - u_moment(&m2, i).unwrap();
            assert!(linalg::max_abs(&d) < 1e-12);
        }
    }

    #[test]
    fn actions() {
        let m = UClass::new(1, 1, vec![ga(), gb()], x2()).unwrap();
        let g0 = from_real_rows(2, &[2.0, 1.0, 0.0, 1.0]);
        for i in 0..2 {
            let moved = g_action(&m, i, &g0).unwrap();
            let expect = &g0 * u_moment(&m, i).unwrap() * inverse(&g0).unwrap();
            assert!(linalg::max_abs(&(u_moment(&moved, i).unwrap() - expect)) < 1e-12);
            let j = 1 - i;
            assert_eq!(u_moment(&moved, j).unwrap(), u_moment(&m, j).unwrap());
        }
        assert!(g_action(&m, 0, &linalg::zeros(2)).is_err());
        let m = UClass::new(3, 0, vec![ga(), gb(), ga() * gb()], x2()).unwrap();
        let s = [2, 0, 1];
        let t = [1, 2, 0];
        let image = perm_action(&m, &s, &[]).unwrap();
        for i in 0..3 {
            assert_eq!(u_moment(&image, s[i]).unwrap(), u_moment(&m, i).unwrap());
        }
        // sigma after tau: first apply t, then s
        let st: Vec<usize> = (0..3).map(|i| s[t[i]]).collect();
        let lhs = perm_action(&m, &st, &[]).unwrap();
        let rhs = perm_action(&perm_action(&m, &t, &[]).unwrap(), &s, &[]).unwrap();
        assert_eq!(lhs, rhs);
        assert!(perm_action(&m, &[0, 0, 1], &[]).is_err());
    }

    #[test]
    fn a0_acts_trivially() {
        let m = UClass::new(1, 1, vec![ga(), gb()], x2()).unwrap();
        let p = InvariantPolynomial::new(2, c(0.3, 0.2)).unwrap();
        let q = InvariantPolynomial::new(2, c(-0.3, -0.2)).unwrap();
        let a = AElement { factors: vec![vec![p], vec![q]] };
        assert!(u_equivalent(&a_action(&m, &a).unwrap(), &m).unwrap());
        let a = AElement { factors: vec![vec![p], vec![]] };
        assert!(!u_equivalent(&a_action(&m, &a).unwrap(), &m).unwrap());
    }

    #[test]
    fn symplectic_examples() {
        let m = UClass::new(2, 0, vec![ga(), gb()], x2()).unwrap();
        let u = UTangent {
            a: vec![from_real_rows(2, &[0.1, 0.5, -0.2, 0.3]), from_real_rows(2, &[0.0, -0.4, 0.7, 0.1])],
            dc: vec![c(0.2, 0.3), r(-1.0)],
        };
        let v = UTangent {
            a: vec![from_real_rows(2, &[0.6, 0.1, 0.1, -0.5]), from_real_rows(2, &[0.2, 0.2, 0.3, 0.9])],
            dc: vec![r(0.4), c(0.0, 0.5)],
        };
        assert_eq!(u_symplectic(&m, &u, &u).unwrap(), r(0.0));
        let printed = u_symplectic_printed(&m, &u, &v).unwrap();
        let rewritten = u_symplectic_rewritten(&m, &u, &v).unwrap();
        assert!((printed - rewritten).norm() < 1e-13);
        let single = UClass::new(1, 0, vec![ga()], x2()).unwrap();
        let (u1, v1) = (
            UTangent { a: vec![u.a[0].clone()], dc: u.dc.clone() },
            UTangent { a: vec![v.a[0].clone()], dc: v.dc.clone() },
        );
        let wp = single.factor(0).unwrap();
        let expect = w::w_symplectic(&wp, &u1.factor(0), &v1.factor(0)).unwrap();
        assert_eq!(u_symplectic(&single, &u1, &v1).unwrap(), expect);
    }

    #[test]
    fn form_rank_matches_quotient_dimension() {
        let m = UClass::new(1, 1, vec![ga(), gb()], x2()).unwrap();
        assert_eq!(u_form_rank(&m).unwrap(), u_dimension(&m));
        let m = UClass::new(1, 0, vec![ga()], x2()).unwrap();
        assert_eq!(u_form_rank(&m).unwrap(), 6);
    }

    #[test]
    fn glue_examples() {
        let x = x2();
        let h = central(&x, c(0.2, 0.5));
        let m1 = UClass::new(1, 1, vec![ga(), linalg::identity(2)], x.clone()).unwrap();
        let m2 = UClass::new(1, 0, vec![h], x.clone()).unwrap();
        let glued = glue(&m1, 0, &m2, 0).unwrap();
        assert_eq!((glued.b, glued.bprime), (1, 0));
        let target = UClass::new(1, 0, vec![ga()], x.clone()).unwrap();
        // (1,0) classes are single elements up to nothing: the absorbed w shows up
        assert!(u_equivalent(&glued, &UClass::new(1, 0, vec![ga() * central(&x, c(0.2, 0.5))], x.clone()).unwrap()).unwrap());
        let m2_id = UClass::new(1, 0, vec![linalg::identity(2)], x.clone()).unwrap();
        assert!(u_equivalent(&glue(&m1, 0, &m2_id, 0).unwrap(), &target).unwrap());
        let bad = UClass::new(1, 0, vec![linalg::identity(2)], SlicePoint::origin(2)).unwrap();
        assert!(matches!(glue(&m1, 0, &bad, 0), Err(MtvError::Gluing(_))));
        let m0 = UClass::new(0, 1, vec![linalg::identity(2)], x.clone()).unwrap();
        assert!(matches!(glue(&m0, 0, &m2_id, 0), Err(MtvError::Signature(_))));
    }

    #[test]
    fn glue_absorber_choice_is_immaterial() {
        let x = x2();
        let m1 = UClass::new(1, 2, vec![ga(), gb(), ga() * gb()], x.clone()).unwrap();
        let gp = &m1.gs[2];
        let z = central(&x, c(-0.1, 0.4));
        let hq = inverse(gp).unwrap() * &z;
        let m2 = UClass::new(2, 1, vec![hq, gb(), ga()], x.clone()).unwrap();
        let first = glue_with_absorber(&m1, 1, &m2, 0, 0).unwrap();
        assert_eq!((first.b, first.bprime), (2, 2));
        for a in 1..4 {
            let other = glue_with_absorber(&m1, 1, &m2, 0, a).unwrap();
            assert!(u_equivalent(&first, &other).unwrap(), "absorber {a}");
        }
    }

    #[test]
    fn w00_examples() {
        let x = x2();
        let i = UClass::new(1, 0, vec![linalg::identity(2)], x.clone()).unwrap();
        let o = UClass::new(0, 1, vec![linalg::identity(2)], x.clone()).unwrap();
        assert_eq!(w00_from_glue(&i, &o).unwrap().g, linalg::identity(2));
        let u = central(&x, c(0.3, 0.3));
        let iu = UClass::new(1, 0, vec![u.clone()], x.clone()).unwrap();
        let p = w00_from_glue(&iu, &o).unwrap();
        assert!(linalg::max_abs(&(p.g - u)) < 1e-14);
        let o_bad = UClass::new(0, 1, vec![linalg::identity(2)], SlicePoint::origin(2)).unwrap();
        assert!(w00_from_glue(&i, &o_bad).is_err());
    }

    #[test]
    fn tstar_examples() {
        let x = x2();
        let id = linalg::identity(2);
        let m = UClass::new(1, 1, vec![id.clone(), id.clone()], x.clone()).unwrap();
        let (g, y) = u11_to_tstar(&m).unwrap();
        assert_eq!((g, y), (id.clone(), x.embed()));
        let m = UClass::new(1, 1, vec![ga(), id.clone()], x.clone()).unwrap();
        let (g, y) = u11_to_tstar(&m).unwrap();
        assert_eq!(g, ga());
        assert!(linalg::max_abs(&(y - ga() * x.embed() * inverse(&ga()).unwrap())) < 1e-14);
        let u = central(&x, c(0.1, 0.2));
        let m = UClass::new(1, 1, vec![ga(), gb()], x.clone()).unwrap();
        let mu = UClass::new(1, 1, vec![ga() * &u, inverse(&u).unwrap() * gb()], x.clone()).unwrap();
        let (g1, y1) = u11_to_tstar(&m).unwrap();
        let (g2, y2) = u11_to_tstar(&mu).unwrap();
        assert!(linalg::max_abs(&(g1.clone() - g2)) < 1e-13 && linalg::max_abs(&(y1.clone() - y2)) < 1e-13);
        let back = tstar_to_u11(&g1, &y1).unwrap();
        assert!(u_equivalent(&back, &m).unwrap());
    }

    #[test]
    fn sl_examples() {
        let x0 = SlicePoint::new(vec![r(0.0), c(0.4, 0.1)]).unwrap();
        let id = linalg::identity(2);
        assert!(sl_membership(&UClass::new(1, 1, vec![id.clone(), id.clone()], x0.clone()).unwrap()));
        let x1 = SlicePoint::new(vec![r(1.0), r(0.0)]).unwrap();
        assert!(!sl_membership(&UClass::new(1, 0, vec![id.clone()], x1).unwrap()));
        let scaled = &id * c(1.3, 0.0);
        assert!(!sl_membership(&UClass::new(1, 1, vec![scaled.clone(), id.clone()], x0.clone()).unwrap()));
        // equal determinants on an incoming and an outgoing factor cancel
        assert!(sl_membership(&UClass::new(1, 1, vec![scaled.clone(), scaled], x0).unwrap()));
    }

    #[test]
    fn fibration_examples() {
        let x = x2();
        let m = UClass::new(1, 0, vec![ga()], x.clone()).unwrap();
        let (s, mus) = fibration_data(&m).unwrap();
        assert_eq!(s, x);
        assert_eq!(mus[0], u_moment(&m, 0).unwrap());
        let z = central(&x, c(0.5, 0.0));
        let m = UClass::new(1, 1, vec![ga(), gb()], x.clone()).unwrap();
        let shifted = UClass::new(1, 1, vec![ga() * &z, gb()], x.clone()).unwrap();
        let f = fibre_element(&shifted, &m).unwrap();
        assert!(linalg::max_abs(&(f - z)) < 1e-13);
        let (_, a) = fibration_data(&shifted).unwrap();
        let (_, b) = fibration_data(&m).unwrap();
        assert!(linalg::max_abs(&(a[0].clone() - &b[0])) < 1e-13);
    }

    #[test]
    fn flip_moves_a_factor() {
        let m = UClass::new(2, 0, vec![ga(), gb()], x2()).unwrap();
        let f = u_flip(&m, 0).unwrap();
        assert_eq!((f.b, f.bprime), (1, 1));
        assert!(axiom_d_residual(&f).unwrap() < 1e-12);
    }

    #[test]
    fn stabilizers_are_trivial() {
        let m = UClass::new(2, 1, vec![ga(), gb(), ga() * gb()], x2()).unwrap();
        for f in 0..3 {
            assert_eq!(stabilizer_dimension(&m, f, true).unwrap(), 0);
            assert_eq!(stabilizer_dimension(&m, f, false).unwrap(), 2);
        }
    }

    #[test]
    fn json_schema() {
        let m = UClass::new(1, 1, vec![ga(), gb()], x2()).unwrap();
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["b"], 1);
        assert_eq!(v["bprime"], 1);
        assert_eq!(v["gs"].as_array().unwrap().len(), 2);
        let back: UClass = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
