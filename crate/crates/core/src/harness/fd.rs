//! Finite-difference exterior derivatives and moment-map checks in flat
//! charts.
//!
//! A chart is a map from `C^N` to the space; coordinate vector fields are
//! constant, so `d omega(u, v, w) = u(omega(v, w)) - v(omega(u, w)) +
//! w(omega(u, v))` with each directional derivative a central difference.
//! Group coordinates are `g = g0 exp(A)` (or `G = exp(A) G0` on `F`), whose
//! left (right) logarithmic derivative comes from the Frechet derivative of
//! `exp`.

use crate::error::{MtvError, Result};
use crate::hilbert::{self, FTangent, JetScheme};
use crate::lie::pair;
use crate::linalg::{self, commutator, inverse, ComplexMatrix, C64};
use crate::slodowy::{self, SlicePoint};
use crate::u::{self, UClass, UTangent};
use crate::w::{self, Orientation, WPoint, WTangent};

/// A flat chart with a 2-form written in its coordinates.
pub trait Chart {
    fn dim(&self) -> usize;
    /// The form at chart point `t` on the coordinate vectors `x`, `y`.
    fn form(&self, t: &[C64], x: &[C64], y: &[C64]) -> Result<C64>;
}

fn check_step(step: f64) -> Result<()> {
    if !(step.is_finite() && step > 0.0 && step * step > f64::EPSILON) {
        return Err(MtvError::StepUnderflow(step));
    }
    Ok(())
}

fn shifted(t: &[C64], d: &[C64], h: f64) -> Vec<C64> {
    t.iter().zip(d).map(|(a, b)| a + b * h).collect()
}

/// Central difference of `f` along `d` at `t`.
pub fn directional<F>(f: F, t: &[C64], d: &[C64], step: f64) -> Result<C64>
where
    F: Fn(&[C64]) -> Result<C64>,
{
    check_step(step)?;
    Ok((f(&shifted(t, d, step))? - f(&shifted(t, d, -step))?) / (2.0 * step))
}

pub fn fd_exterior_derivative<C: Chart + ?Sized>(
    chart: &C,
    t: &[C64],
    u: &[C64],
    v: &[C64],
    w: &[C64],
    step: f64,
) -> Result<C64> {
    let n = chart.dim();
    if [t, u, v, w].iter().any(|x| x.len() != n) {
        return Err(MtvError::Dimension("vector length differs from chart dimension".into()));
    }
    let du = directional(|p| chart.form(p, v, w), t, u, step)?;
    let dv = directional(|p| chart.form(p, u, w), t, v, step)?;
    let dw = directional(|p| chart.form(p, u, v), t, w, step)?;
    Ok(du - dv + dw)
}

/// `|omega(xi#, v) - sign * dH(v)|`; `sign = 1` is the frozen convention,
/// `sign = -1` the negative control.
pub fn fd_moment_condition<C, H>(
    chart: &C,
    hamiltonian: H,
    t: &[C64],
    xi_sharp: &[C64],
    v: &[C64],
    step: f64,
    sign: f64,
) -> Result<f64>
where
    C: Chart + ?Sized,
    H: Fn(&[C64]) -> Result<C64>,
{
    let lhs = chart.form(t, xi_sharp, v)?;
    let dh = directional(hamiltonian, t, v, step)?;
    Ok((lhs - dh * sign).norm())
}

fn mat_of_row_major(v: &[C64], k: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(k, k, |r, c| v[r * k + c])
}

pub fn row_major(m: &ComplexMatrix) -> Vec<C64> {
    let k = m.nrows();
    (0..k * k).map(|i| m[(i / k, i % k)]).collect()
}

/// `exp(-A) D exp_A(dA)`.
fn left_log(a: &ComplexMatrix, da: &ComplexMatrix) -> ComplexMatrix {
    linalg::expm(&-a) * linalg::expm_frechet(a, da)
}

/// `D exp_A(dA) exp(-A)`.
fn right_log(a: &ComplexMatrix, da: &ComplexMatrix) -> ComplexMatrix {
    linalg::expm_frechet(a, da) * linalg::expm(&-a)
}

/// Which 2-form a [`WChart`] evaluates.
#[derive(Debug, Clone)]
pub enum WForm {
    Exact,
    /// The exact form with `<A, B>` replaced by `tr(W A B)`: a negative
    /// control that is not closed for non-scalar `W`.
    Weighted(ComplexMatrix),
}

/// Coordinates `(A, dc)` with `g = g0 exp(A)`, `X = X0 + dc`; `A` is stored
/// row-major.
#[derive(Debug, Clone)]
pub struct WChart {
    pub base: WPoint,
    pub form: WForm,
}

impl WChart {
    pub fn new(base: WPoint) -> Self {
        Self { base, form: WForm::Exact }
    }

    fn k(&self) -> usize {
        self.base.k()
    }

    pub fn point(&self, t: &[C64]) -> WPoint {
        let k = self.k();
        let a = mat_of_row_major(&t[..k * k], k);
        let coeffs = self.base.x.coeffs.iter().zip(&t[k * k..]).map(|(c, d)| c + d).collect();
        WPoint {
            orientation: self.base.orientation,
            g: &self.base.g * linalg::expm(&a),
            x: SlicePoint { k, coeffs },
        }
    }

    pub fn tangent(&self, t: &[C64], x: &[C64]) -> WTangent {
        let k = self.k();
        let a = mat_of_row_major(&t[..k * k], k);
        let da = mat_of_row_major(&x[..k * k], k);
        WTangent { a: left_log(&a, &da), dc: x[k * k..].to_vec() }
    }

    /// Chart coordinates of a tangent given in left-logarithmic form at the
    /// base point.
    pub fn coords(&self, t: &WTangent) -> Vec<C64> {
        let mut v = row_major(&t.a);
        v.extend_from_slice(&t.dc);
        v
    }
}

fn weighted_pair(w: &ComplexMatrix, a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    linalg::trace(&(w * a * b))
}

impl Chart for WChart {
    fn dim(&self) -> usize {
        let k = self.k();
        k * k + k
    }

    fn form(&self, t: &[C64], x: &[C64], y: &[C64]) -> Result<C64> {
        let p = self.point(t);
        let (u, v) = (self.tangent(t, x), self.tangent(t, y));
        match &self.form {
            WForm::Exact => w::w_symplectic(&p, &u, &v),
            WForm::Weighted(wt) => {
                let xm = p.x.embed();
                let (dxu, dxv) = (u.dx(), v.dx());
                let (au, av) = match p.orientation {
                    Orientation::Incoming => (u.a.clone(), v.a.clone()),
                    Orientation::Outgoing => {
                        let gi = inverse(&p.g)?;
                        (&p.g * &u.a * &gi, &p.g * &v.a * &gi)
                    }
                };
                let sign = if p.orientation == Orientation::Incoming { 1.0 } else { -1.0 };
                Ok(weighted_pair(wt, &au, &dxv) - weighted_pair(wt, &av, &dxu)
                    + weighted_pair(wt, &xm, &commutator(&au, &av)) * sign)
            }
        }
    }
}

/// Coordinates `(A_1, ..., A_n, dc)` with `g_i = g_i0 exp(A_i)`.
#[derive(Debug, Clone)]
pub struct UChart {
    pub base: UClass,
}

impl UChart {
    pub fn new(base: UClass) -> Self {
        Self { base }
    }

    pub fn point(&self, t: &[C64]) -> UClass {
        let (n, k) = (self.base.n(), self.base.k());
        let kk = k * k;
        let gs = (0..n)
            .map(|i| &self.base.gs[i] * linalg::expm(&mat_of_row_major(&t[i * kk..(i + 1) * kk], k)))
            .collect();
        let coeffs = self.base.x.coeffs.iter().zip(&t[n * kk..]).map(|(c, d)| c + d).collect();
        UClass { gs, x: SlicePoint { k, coeffs }, ..self.base.clone() }
    }

    pub fn tangent(&self, t: &[C64], x: &[C64]) -> UTangent {
        let (n, k) = (self.base.n(), self.base.k());
        let kk = k * k;
        let a = (0..n)
            .map(|i| {
                let ai = mat_of_row_major(&t[i * kk..(i + 1) * kk], k);
                left_log(&ai, &mat_of_row_major(&x[i * kk..(i + 1) * kk], k))
            })
            .collect();
        UTangent { a, dc: x[n * kk..].to_vec() }
    }
}

impl Chart for UChart {
    fn dim(&self) -> usize {
        let (n, k) = (self.base.n(), self.base.k());
        n * k * k + k
    }

    fn form(&self, t: &[C64], x: &[C64], y: &[C64]) -> Result<C64> {
        u::u_symplectic(&self.point(t), &self.tangent(t, x), &self.tangent(t, y))
    }
}

/// Coordinates `(A, c)` on `F_k^{1,0}` with `G = exp(A) G0` and
/// `J = J0 + sum c_{i,m} L^m` block by block.
#[derive(Debug, Clone)]
pub struct FChart {
    pub g0: ComplexMatrix,
    pub j0: ComplexMatrix,
    pub lengths: Vec<usize>,
}

impl FChart {
    pub fn new(d: &JetScheme) -> Result<Self> {
        Ok(Self { g0: hilbert::g_matrix(d, 0)?, j0: hilbert::jordan_of(d), lengths: d.lengths() })
    }

    fn k(&self) -> usize {
        self.g0.nrows()
    }

    fn split(&self, c: &[C64]) -> Vec<Vec<C64>> {
        let mut out = Vec::with_capacity(self.lengths.len());
        let mut off = 0;
        for &l in &self.lengths {
            out.push(c[off..off + l].to_vec());
            off += l;
        }
        out
    }

    pub fn point(&self, t: &[C64]) -> Result<(ComplexMatrix, ComplexMatrix)> {
        let k = self.k();
        let a = mat_of_row_major(&t[..k * k], k);
        let dj = hilbert::f_dj(&self.lengths, &self.split(&t[k * k..]))?;
        Ok((linalg::expm(&a) * &self.g0, &self.j0 + dj))
    }

    pub fn tangent(&self, t: &[C64], x: &[C64]) -> FTangent {
        let k = self.k();
        let a = mat_of_row_major(&t[..k * k], k);
        let da = mat_of_row_major(&x[..k * k], k);
        FTangent { rho: right_log(&a, &da), dc: self.split(&x[k * k..]) }
    }

    pub fn coords(&self, t: &FTangent) -> Vec<C64> {
        let mut v = row_major(&t.rho);
        v.extend(t.dc.iter().flatten().copied());
        v
    }
}

impl Chart for FChart {
    fn dim(&self) -> usize {
        let k = self.k();
        k * k + k
    }

    fn form(&self, t: &[C64], x: &[C64], y: &[C64]) -> Result<C64> {
        let (g, j) = self.point(t)?;
        hilbert::f_form(&g, &j, &self.lengths, &self.tangent(t, x), &self.tangent(t, y))
    }
}

/// `<mu(point), xi>` for a [`WChart`].
pub fn w_hamiltonian<'a>(chart: &'a WChart, xi: &ComplexMatrix) -> impl Fn(&[C64]) -> Result<C64> + 'a {
    let xi = xi.clone();
    move |t| Ok(pair(&w::w_moment(&chart.point(t))?, &xi))
}

/// `sum_P P(X)` for the A-action generated by `terms`.
pub fn a_hamiltonian<'a>(
    chart: &'a WChart,
    terms: &'a [crate::lie::InvariantPolynomial],
) -> impl Fn(&[C64]) -> Result<C64> + 'a {
    move |t| {
        let x = chart.point(t).x.embed();
        terms.iter().map(|p| crate::lie::inv_poly_eval(p, &x)).sum()
    }
}

/// The map `(G, J) -> (G T, X)` used by [`hilbert::hilb_to_u`], evaluated on
/// an `F^{1,0}` chart: `X` is the slice element with the characteristic
/// polynomial of `J` and `T` the Krylov gauge with `T X T^{-1} = J`.
pub fn f_to_w_point(chart: &FChart, t: &[C64]) -> Result<WPoint> {
    let (g, j) = chart.point(t)?;
    let x = slodowy::slice_from_char_poly(&linalg::char_poly(&j));
    let (tm, _) = hilbert::jordan_conjugators(&x.embed(), &j, &chart.lengths)?;
    Ok(WPoint { orientation: Orientation::Incoming, g: g * tm, x })
}

/// Pushes the chart vector `x` at the chart origin forward to `W^{1,0}` with
/// a fourth-order difference of [`f_to_w_point`].
pub fn f_to_w_tangent(chart: &FChart, x: &[C64], step: f64) -> Result<(WPoint, WTangent)> {
    check_step(step)?;
    let origin = vec![C64::new(0.0, 0.0); chart.dim()];
    let p0 = f_to_w_point(chart, &origin)?;
    let at = |h: f64| f_to_w_point(chart, &shifted(&origin, x, h));
    let (p1, m1, p2, m2) = (at(step)?, at(-step)?, at(2.0 * step)?, at(-2.0 * step)?);
    let stencil = |a: C64, b: C64, c: C64, d: C64| (-c + a * 8.0 - b * 8.0 + d) / (12.0 * step);
    let dg = ComplexMatrix::from_fn(p0.k(), p0.k(), |r, c| {
        stencil(p1.g[(r, c)], m1.g[(r, c)], p2.g[(r, c)], m2.g[(r, c)])
    });
    let dc = (0..p0.k())
        .map(|i| stencil(p1.x.coeffs[i], m1.x.coeffs[i], p2.x.coeffs[i], m2.x.coeffs[i]))
        .collect();
    let a = inverse(&p0.g)? * dg;
    Ok((p0, WTangent { a, dc }))
}
