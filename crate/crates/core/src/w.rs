//! The building blocks `W^{1,0} = G x S` (incoming) and `W^{0,1}` (outgoing).
//!
//! Tangent vectors are written in left-logarithmic coordinates: `a = g^{-1} dg`
//! and a slice-coefficient direction `dc`, so `dX = sum_j dc_j f^j`.
//!
//! The normative 2-forms are the exact forms
//!
//! * incoming: `-d<X, g^{-1}dg>`, i.e. `<a_u, dX_v> - <a_v, dX_u> + <X, [a_u, a_v]>`
//! * outgoing: `-d<X, dg g^{-1}>`, i.e. `<al_u, dX_v> - <al_v, dX_u> - <X, [al_u, al_v]>`
//!   with `al = g a g^{-1}`
//!
//! for which `Ad(g)X` (left action) and `-Ad(g^{-1})X` (right action) are
//! moment maps. [`eq1_lhs`] and [`eq1_rhs`] evaluate the two printed
//! expressions `-<dX ^ g^{-1}dg> + <X, g^{-1}dg ^ g^{-1}dg>` and
//! `<dg g^{-1} ^ d(Ad(g)X)>` with the graded bracket
//! `[b ^ b](u, v) = [b(u), b(v)] - [b(v), b(u)]`. They agree with each other,
//! and differ from the exact form by one copy of `<X, [a_u, a_v]>`.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MtvError, Result};
use crate::lie::{self, pair, InvariantPolynomial};
use crate::linalg::{self, commutator, inverse, ComplexMatrix, C64};
use crate::slodowy::{self, SlicePoint};

/// Residual allowed between `-Ad(p) theta(X)` and the slice before reading
/// its coordinates.
pub const PHI_SLICE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "in")]
    Incoming,
    #[serde(rename = "out")]
    Outgoing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WPoint {
    pub orientation: Orientation,
    #[serde(with = "crate::json::matrix")]
    pub g: ComplexMatrix,
    #[serde(rename = "X")]
    pub x: SlicePoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WTangent {
    pub a: ComplexMatrix,
    pub dc: Vec<C64>,
}

impl WTangent {
    pub fn zero(k: usize) -> Self {
        Self { a: linalg::zeros(k), dc: vec![C64::new(0.0, 0.0); k] }
    }

    pub fn group(a: ComplexMatrix) -> Self {
        let k = a.nrows();
        Self { a, dc: vec![C64::new(0.0, 0.0); k] }
    }

    pub fn slice(dc: Vec<C64>) -> Self {
        let k = dc.len();
        Self { a: linalg::zeros(k), dc }
    }

    pub fn dx(&self) -> ComplexMatrix {
        SlicePoint::direction(self.dc.len(), &self.dc)
    }
}

impl WPoint {
    pub fn new(orientation: Orientation, g: ComplexMatrix, x: SlicePoint) -> Result<Self> {
        let p = Self { orientation, g, x };
        p.validate()?;
        Ok(p)
    }

    pub fn k(&self) -> usize {
        self.x.k
    }

    pub fn validate(&self) -> Result<()> {
        self.x.validate()?;
        let k = linalg::check_square(&self.g, "g")?;
        if k != self.x.k {
            return Err(MtvError::Dimension(format!("g is {k}x{k} but X has k = {}", self.x.k)));
        }
        if !linalg::is_finite(&self.g) {
            return Err(MtvError::Dimension("non-finite entries in g".into()));
        }
        inverse(&self.g)?;
        Ok(())
    }

    /// Left translation for incoming points, `g -> g g0^{-1}` for outgoing.
    pub fn act(&self, g0: &ComplexMatrix) -> Result<WPoint> {
        linalg::check_same_size(g0, &self.g)?;
        let g0_inv = inverse(g0)?;
        let g = match self.orientation {
            Orientation::Incoming => g0 * &self.g,
            Orientation::Outgoing => &self.g * g0_inv,
        };
        Ok(WPoint { orientation: self.orientation, g, x: self.x.clone() })
    }
}

fn check_tangent(p: &WPoint, t: &WTangent) -> Result<()> {
    let k = p.k();
    if t.a.nrows() != k || t.a.ncols() != k || t.dc.len() != k {
        return Err(MtvError::Dimension("tangent does not match point size".into()));
    }
    Ok(())
}

pub fn w_moment(p: &WPoint) -> Result<ComplexMatrix> {
    let g_inv = inverse(&p.g)?;
    let x = p.x.embed();
    Ok(match p.orientation {
        Orientation::Incoming => &p.g * x * g_inv,
        Orientation::Outgoing => -(g_inv * x * &p.g),
    })
}

pub fn w_symplectic(p: &WPoint, u: &WTangent, v: &WTangent) -> Result<C64> {
    check_tangent(p, u)?;
    check_tangent(p, v)?;
    let x = p.x.embed();
    let (dxu, dxv) = (u.dx(), v.dx());
    Ok(match p.orientation {
        Orientation::Incoming => {
            pair(&u.a, &dxv) - pair(&v.a, &dxu) + pair(&x, &commutator(&u.a, &v.a))
        }
        Orientation::Outgoing => {
            let g_inv = inverse(&p.g)?;
            let al_u = &p.g * &u.a * &g_inv;
            let al_v = &p.g * &v.a * &g_inv;
            pair(&al_u, &dxv) - pair(&al_v, &dxu) - pair(&x, &commutator(&al_u, &al_v))
        }
    })
}

/// `-<dX ^ g^{-1}dg> + <X, g^{-1}dg ^ g^{-1}dg>` with the graded bracket,
/// for incoming points.
pub fn eq1_lhs(p: &WPoint, u: &WTangent, v: &WTangent) -> Result<C64> {
    if p.orientation != Orientation::Incoming {
        return Err(MtvError::Signature("the left-hand expression is stated for incoming points".into()));
    }
    check_tangent(p, u)?;
    check_tangent(p, v)?;
    let x = p.x.embed();
    let wedge_dx_beta = pair(&u.dx(), &v.a) - pair(&v.dx(), &u.a);
    let graded = commutator(&u.a, &v.a) - commutator(&v.a, &u.a);
    Ok(-wedge_dx_beta + pair(&x, &graded))
}

/// Literal right-hand expression: `<dg g^{-1} ^ d(Ad(g)X)>` for incoming
/// points and `<g^{-1}dg ^ d(Ad(g^{-1})X)>` for outgoing ones, with
/// `<phi ^ psi>(u, v) = <phi(u), psi(v)> - <phi(v), psi(u)>`.
pub fn eq1_rhs(p: &WPoint, u: &WTangent, v: &WTangent) -> Result<C64> {
    check_tangent(p, u)?;
    check_tangent(p, v)?;
    let g_inv = inverse(&p.g)?;
    let x = p.x.embed();
    match p.orientation {
        Orientation::Incoming => {
            let alpha = |t: &WTangent| &p.g * &t.a * &g_inv;
            let dmu = |t: &WTangent| &p.g * (commutator(&t.a, &x) + t.dx()) * &g_inv;
            Ok(pair(&alpha(u), &dmu(v)) - pair(&alpha(v), &dmu(u)))
        }
        Orientation::Outgoing => {
            let nu = &g_inv * &x * &p.g;
            let dnu = |t: &WTangent| -commutator(&t.a, &nu) + &g_inv * t.dx() * &p.g;
            Ok(pair(&u.a, &dnu(v)) - pair(&v.a, &dnu(u)))
        }
    }
}

/// Fundamental vector field of `xi` for the G-action of [`WPoint::act`].
pub fn g_sharp(p: &WPoint, xi: &ComplexMatrix) -> Result<WTangent> {
    let a = match p.orientation {
        Orientation::Incoming => inverse(&p.g)? * xi * &p.g,
        Orientation::Outgoing => -xi.clone(),
    };
    Ok(WTangent::group(a))
}

/// `P.(g, X) = (g exp(C_P(X)), X)` incoming, `(exp(C_P(X)) g, X)` outgoing.
pub fn a_action(terms: &[InvariantPolynomial], p: &WPoint) -> Result<WPoint> {
    let cp = lie::combined_gradient(terms, &p.x.embed())?;
    let e = linalg::expm(&cp);
    let g = match p.orientation {
        Orientation::Incoming => &p.g * e,
        Orientation::Outgoing => e * &p.g,
    };
    Ok(WPoint { orientation: p.orientation, g, x: p.x.clone() })
}

/// Fundamental vector field of the A-action generated by `terms`.
pub fn a_sharp(terms: &[InvariantPolynomial], p: &WPoint) -> Result<WTangent> {
    let cp = lie::combined_gradient(terms, &p.x.embed())?;
    let a = match p.orientation {
        Orientation::Incoming => cp,
        Orientation::Outgoing => inverse(&p.g)? * cp * &p.g,
    };
    Ok(WTangent::group(a))
}

/// `(P_1(X), ..., P_k(X))` with `P_m = tr(X^m)`.
pub fn a_moment(p: &WPoint) -> Result<Vec<C64>> {
    moment_coordinates(&p.x.embed())
}

pub fn moment_coordinates(x: &ComplexMatrix) -> Result<Vec<C64>> {
    let k = linalg::check_square(x, "X")?;
    (1..=k)
        .map(|m| lie::inv_poly_eval(&InvariantPolynomial::power_trace(m), x))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaKind {
    Algebra,
    Group,
}

/// `A -> -A^T` on the algebra, `g -> (g^T)^{-1}` on the group.
pub fn theta(m: &ComplexMatrix, kind: ThetaKind) -> Result<ComplexMatrix> {
    linalg::check_square(m, "argument")?;
    match kind {
        ThetaKind::Algebra => Ok(-m.transpose()),
        ThetaKind::Group => inverse(&m.transpose()),
    }
}

/// `p` with `p (e' + Z(f')) p^{-1} = S` where `e' = e^T`, `f' = f^T`.
///
/// Solves `p e^T = e p` and `p f^T = f p`; the solutions form a line and the
/// representative has first nonzero entry of its first column equal to 1.
pub fn opposite_slice_conjugator(k: usize) -> Result<ComplexMatrix> {
    static CACHE: OnceLock<RwLock<HashMap<usize, ComplexMatrix>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(p) = cache.read().expect("conjugator cache poisoned").get(&k) {
        return Ok(p.clone());
    }
    let t = slodowy::principal_triple(k)?;
    let n = k * k;
    let mut sys = DMatrix::zeros(2 * n, n);
    let op_e = linalg::right_mul_op(&t.e.transpose()) - linalg::left_mul_op(&t.e);
    let op_f = linalg::right_mul_op(&t.f.transpose()) - linalg::left_mul_op(&t.f);
    sys.view_mut((0, 0), (n, n)).copy_from(&op_e);
    sys.view_mut((n, 0), (n, n)).copy_from(&op_f);
    let ker = linalg::kernel(&sys);
    if ker.ncols() != 1 {
        return Err(MtvError::Singular(format!(
            "conjugator solve returned a {}-dimensional family",
            ker.ncols()
        )));
    }
    let mut p = linalg::mat_of(ker.column(0).as_slice(), k);
    let pivot = (0..k)
        .map(|i| p[(i, 0)])
        .find(|z| z.norm() > 1e-8)
        .ok_or_else(|| MtvError::Singular("conjugator has zero first column".into()))?;
    p /= pivot;
    // clean rounding noise so the cached value is reproducible
    p.apply(|z| {
        let re = if (z.re - z.re.round()).abs() < 1e-12 { z.re.round() } else { z.re };
        let im = if z.im.abs() < 1e-12 { 0.0 } else { z.im };
        *z = C64::new(re, im);
    });
    inverse(&p)?;
    cache
        .write()
        .expect("conjugator cache poisoned")
        .insert(k, p.clone());
    Ok(p)
}

/// The orientation-reversing map `W^{1,0} -> W^{0,1}`:
/// `(g, X) -> (p theta(g)^{-1}, -Ad(p) theta(X))`.
///
/// With this group part `phi(g0 . m) = theta(g0) . phi(m)` holds for the
/// literal `theta`, and `phi` pulls the outgoing form back to the incoming one.
pub fn phi_e(m: &WPoint) -> Result<WPoint> {
    if m.orientation != Orientation::Incoming {
        return Err(MtvError::Signature("phi_E expects an incoming point".into()));
    }
    let k = m.k();
    let p = opposite_slice_conjugator(k)?;
    let p_inv = inverse(&p)?;
    let x = m.x.embed();
    let image = -(&p * theta(&x, ThetaKind::Algebra)? * &p_inv);
    let x_new = slice_part(&image)?;
    let g_new = &p * inverse(&theta(&m.g, ThetaKind::Group)?)?;
    Ok(WPoint { orientation: Orientation::Outgoing, g: g_new, x: x_new })
}

/// Inverse of [`phi_e`].
pub fn phi_e_inverse(m: &WPoint) -> Result<WPoint> {
    if m.orientation != Orientation::Outgoing {
        return Err(MtvError::Signature("phi_E inverse expects an outgoing point".into()));
    }
    let k = m.k();
    let p = opposite_slice_conjugator(k)?;
    let p_inv = inverse(&p)?;
    let x = m.x.embed();
    // X = theta^{-1}(-Ad(p^{-1}) X') = (p^{-1} X' p)^T
    let image = (&p_inv * x * &p).transpose();
    let x_new = slice_part(&image)?;
    // p theta(g)^{-1} = p g^T
    let g_new = (&p_inv * &m.g).transpose();
    Ok(WPoint { orientation: Orientation::Incoming, g: g_new, x: x_new })
}

fn slice_part(image: &ComplexMatrix) -> Result<SlicePoint> {
    if !slodowy::is_in_slice(image) {
        return Err(MtvError::NotRegular("conjugated element left the slice".into()));
    }
    let s = slodowy::slice_coordinates(image)?;
    let drift = linalg::max_abs(&(s.embed() - image));
    if drift > PHI_SLICE_TOL {
        return Err(MtvError::NotRegular(format!("slice drift {drift:e}")));
    }
    Ok(s)
}

/// Identity check helper used by tests: `theta` is an involution.
pub fn theta_is_involution(m: &ComplexMatrix, kind: ThetaKind) -> Result<f64> {
    let twice = theta(&theta(m, kind)?, kind)?;
    Ok(linalg::max_abs(&(twice - m)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, from_real_rows, r, unit};

    fn swap_point(orientation: Orientation, g: ComplexMatrix) -> WPoint {
        WPoint::new(orientation, g, SlicePoint::new(vec![r(0.0), r(1.0)]).unwrap()).unwrap()
    }

    #[test]
    fn moment_examples() {
        let x = SlicePoint::new(vec![c(0.2, 0.1), c(-0.3, 0.4)]).unwrap();
        let pin = WPoint::new(Orientation::Incoming, linalg::identity(2), x.clone()).unwrap();
        assert_eq!(w_moment(&pin).unwrap(), x.embed());
        let pout = WPoint::new(Orientation::Outgoing, linalg::identity(2), x.clone()).unwrap();
        assert_eq!(w_moment(&pout).unwrap(), -x.embed());
        let g = from_real_rows(2, &[2.0, 0.0, 0.0, 0.5]);
        let mu = w_moment(&swap_point(Orientation::Incoming, g)).unwrap();
        let expect = from_real_rows(2, &[0.0, 4.0, 0.25, 0.0]);
        assert!(linalg::max_abs(&(mu - expect)) < 1e-15);
        let singular = WPoint {
            orientation: Orientation::Incoming,
            g: from_real_rows(2, &[1.0, 1.0, 1.0, 1.0]),
            x,
        };
        assert!(matches!(w_moment(&singular), Err(MtvError::Singular(_))));
    }

    #[test]
    fn symplectic_examples() {
        let p = swap_point(Orientation::Incoming, linalg::identity(2));
        let t = WTangent { a: from_real_rows(2, &[0.1, 0.2, 0.3, 0.4]), dc: vec![r(1.0), c(0.0, 2.0)] };
        assert_eq!(w_symplectic(&p, &t, &t).unwrap(), r(0.0));
        // (a, 0) against (0, dX) gives <a, dX>
        let a = from_real_rows(2, &[0.5, -1.0, 2.0, 0.25]);
        let dc = vec![c(0.3, 0.1), c(-0.7, 0.2)];
        let u = WTangent::group(a.clone());
        let v = WTangent::slice(dc.clone());
        let expect = pair(&a, &SlicePoint::direction(2, &dc));
        assert!((w_symplectic(&p, &u, &v).unwrap() - expect).norm() < 1e-15);
        // two group directions: <X, [E12, E21]> = <X, diag(1, -1)> = 0
        let u = WTangent::group(unit(2, 0, 1));
        let v = WTangent::group(unit(2, 1, 0));
        assert_eq!(w_symplectic(&p, &u, &v).unwrap(), r(0.0));
    }

    #[test]
    fn printed_sides_agree_and_exceed_exact_form_by_one_bracket() {
        let g = from_real_rows(2, &[1.0, 0.3, -0.2, 0.9]);
        let p = WPoint::new(
            Orientation::Incoming,
            g,
            SlicePoint::new(vec![c(0.2, 0.4), c(-0.6, 0.1)]).unwrap(),
        )
        .unwrap();
        let u = WTangent { a: from_real_rows(2, &[0.1, 0.7, -0.4, 0.2]), dc: vec![r(0.3), c(0.0, 1.0)] };
        let v = WTangent { a: from_real_rows(2, &[-0.5, 0.1, 0.6, 0.3]), dc: vec![c(1.0, 1.0), r(-0.2)] };
        let w = w_symplectic(&p, &u, &v).unwrap();
        let lhs = eq1_lhs(&p, &u, &v).unwrap();
        assert!((lhs - eq1_rhs(&p, &u, &v).unwrap()).norm() < 1e-13);
        let bracket = pair(&p.x.embed(), &commutator(&u.a, &v.a));
        assert!((lhs - w - bracket).norm() < 1e-13);
    }

    #[test]
    fn a_action_examples() {
        let p = swap_point(Orientation::Incoming, from_real_rows(2, &[1.0, 0.5, 0.0, 1.0]));
        let same = a_action(&[InvariantPolynomial::new(1, r(0.0)).unwrap()], &p).unwrap();
        assert!(linalg::max_abs(&(same.g - &p.g)) < 1e-15);
        let t = c(0.3, -0.2);
        let moved = a_action(&[InvariantPolynomial::new(1, t).unwrap()], &p).unwrap();
        let expect = &p.g * linalg::expm(&(linalg::identity(2) * t));
        assert!(linalg::max_abs(&(moved.g.clone() - expect)) < 1e-14);
        let moved = a_action(&[InvariantPolynomial::new(2, t).unwrap()], &p).unwrap();
        let d = w_moment(&moved).unwrap() - w_moment(&p).unwrap();
        assert!(linalg::max_abs(&d) < 1e-13);
    }

    #[test]
    fn a_moment_examples() {
        let p = swap_point(Orientation::Incoming, linalg::identity(2));
        assert_eq!(a_moment(&p).unwrap(), vec![r(0.0), r(2.0)]);
        let nil = WPoint::new(Orientation::Incoming, linalg::identity(3), SlicePoint::origin(3)).unwrap();
        assert!(a_moment(&nil).unwrap().iter().all(|z| z.norm() == 0.0));
        let g = from_real_rows(2, &[3.0, 1.0, 1.0, 1.0]);
        assert_eq!(a_moment(&swap_point(Orientation::Incoming, g)).unwrap(), a_moment(&p).unwrap());
    }

    #[test]
    fn theta_examples() {
        let d = from_real_rows(2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(theta(&d, ThetaKind::Algebra).unwrap(), from_real_rows(2, &[-1.0, 0.0, 0.0, 1.0]));
        let g = from_real_rows(2, &[1.0, 2.0, 0.5, 3.0]);
        let h = from_real_rows(2, &[0.0, 1.0, -1.0, 0.4]);
        assert!(theta_is_involution(&g, ThetaKind::Group).unwrap() < 1e-14);
        assert_eq!(theta_is_involution(&g, ThetaKind::Algebra).unwrap(), 0.0);
        let lhs = theta(&(&g * &h), ThetaKind::Group).unwrap();
        let rhs = theta(&g, ThetaKind::Group).unwrap() * theta(&h, ThetaKind::Group).unwrap();
        assert!(linalg::max_abs(&(lhs - rhs)) < 1e-14);
        assert!(theta(&from_real_rows(2, &[1.0, 1.0, 1.0, 1.0]), ThetaKind::Group).is_err());
    }

    #[test]
    fn conjugator_examples() {
        assert_eq!(opposite_slice_conjugator(1).unwrap(), linalg::identity(1));
        assert_eq!(opposite_slice_conjugator(2).unwrap(), from_real_rows(2, &[0.0, 1.0, 1.0, 0.0]));
        let p = opposite_slice_conjugator(3).unwrap();
        let p_inv = inverse(&p).unwrap();
        let t = slodowy::principal_triple(3).unwrap();
        let e_opp = t.e.transpose();
        assert!(slodowy::is_in_slice(&(&p * &e_opp * &p_inv)));
        for j in 0..3 {
            let fj = linalg::matrix_power(&t.f.transpose(), j);
            let img = &p * (&e_opp + fj) * &p_inv;
            assert!(slodowy::is_in_slice(&img), "basis direction {j}");
        }
    }

    #[test]
    fn phi_examples() {
        let x = SlicePoint::new(vec![c(0.4, -0.1), c(1.2, 0.3)]).unwrap();
        let m = WPoint::new(Orientation::Incoming, linalg::identity(2), x.clone()).unwrap();
        let img = phi_e(&m).unwrap();
        assert_eq!(img.orientation, Orientation::Outgoing);
        assert!(img.x.distance(&x) < 1e-15);
        let g = from_real_rows(2, &[1.0, 0.2, -0.4, 1.5]);
        let m = WPoint::new(Orientation::Incoming, g.clone(), x).unwrap();
        let back = phi_e_inverse(&phi_e(&m).unwrap()).unwrap();
        assert!(linalg::max_abs(&(back.g - &m.g)) < 1e-14);
        assert!(back.x.distance(&m.x) < 1e-14);
        // anti-equivariance
        let g0 = from_real_rows(2, &[0.7, 0.1, 0.3, 1.1]);
        let lhs = phi_e(&m.act(&g0).unwrap()).unwrap();
        let rhs = phi_e(&m).unwrap().act(&theta(&g0, ThetaKind::Group).unwrap()).unwrap();
        assert!(linalg::max_abs(&(lhs.g - rhs.g)) < 1e-14);
        assert!(phi_e(&phi_e(&m).unwrap()).is_err());
    }

    #[test]
    fn wpoint_json_schema() {
        let p = swap_point(Orientation::Outgoing, linalg::identity(2));
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        assert_eq!(v["orientation"], "out");
        assert_eq!(v["X"]["k"], 2);
        assert_eq!(v["g"][0][0], serde_json::json!([1.0, 0.0]));
        let back: WPoint = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
