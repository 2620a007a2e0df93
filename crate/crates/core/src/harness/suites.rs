//! The individual suites. `plan` fixes the trial count and the bounds of a
//! suite; `run_trial` measures one trial. Checks are residuals (smaller is
//! better), controls are values a broken implementation would fail to exceed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::fd::{self, Chart, FChart, UChart, WChart, WForm};
use super::sample::{self, sample_disc, sample_group, sample_matrix, sample_vector};
use super::{Bounds, SuiteConfig, Trial};
use crate::error::{MtvError, Result};
use crate::hilbert::{self, JetScheme};
use crate::lie::{self, pair, InvariantPolynomial};
use crate::linalg::{self, inverse, ComplexMatrix, C64, ONE, ZERO};
use crate::slodowy::{self, SlicePoint};
use crate::u::{self, UClass, UTangent};
use crate::w::{self, Orientation, ThetaKind, WPoint, WTangent};

const FIXED_EQ2_TOL: f64 = 1e-9;
const FIXED_HAMILTONIAN_TOL: f64 = 1e-5;
const EQUIV: f64 = 1e-9;
const CONTROL_GAP: f64 = 1e-6;
const TRANSPORT_STEP: f64 = 1e-3;
const TRANSPORT_TOL: f64 = 1e-6;

fn bounds(checks: &[(&'static str, f64)], controls: &[(&'static str, f64)]) -> Bounds {
    Bounds { checks: checks.to_vec(), controls: controls.to_vec() }
}

pub(crate) fn plan(config: &SuiteConfig, name: &str) -> Result<(usize, Bounds)> {
    let t = config.trials.min(200);
    let (alg, fd) = (config.tol_alg, config.tol_fd);
    Ok(match name {
        "polarization" => (
            t,
            bounds(
                &[("polarization_identity", FIXED_EQ2_TOL), ("gradient_commutes", alg)],
                &[("missing_degree_factor", CONTROL_GAP)],
            ),
        ),
        "hamiltonian_w" => (
            t,
            bounds(
                &[("group_moment", FIXED_HAMILTONIAN_TOL), ("a_moment", FIXED_HAMILTONIAN_TOL)],
                &[("flipped_sign", 1e-2)],
            ),
        ),
        "closedness" => (
            t,
            bounds(&[("w_closed", fd), ("u_closed", fd), ("f_closed", fd)], &[("weighted_not_closed", 100.0 * fd)]),
        ),
        "form_identity" => (
            t,
            bounds(
                &[("printed_vs_rewritten", alg), ("graded_bracket_sides", alg)],
                &[("normative_vs_printed", CONTROL_GAP)],
            ),
        ),
        "axiom_d" => (t, bounds(&[("power_traces", alg)], &[("perturbed_slice", CONTROL_GAP)])),
        "gluing" => (
            t,
            bounds(
                &[
                    ("signature", 0.0),
                    ("absorber_choice", EQUIV),
                    ("representative_choice", EQUIV),
                    ("diagonal_action", EQUIV),
                    ("fixed_example", EQUIV),
                ],
                &[("unabsorbed_factor", CONTROL_GAP), ("mismatch_rejected", 0.5)],
            ),
        ),
        "theorem_2_4_i" => (
            t,
            bounds(
                &[
                    ("constant_on_classes", alg),
                    ("injective", EQUIV),
                    ("round_trip", alg),
                    ("image_regular", 0.0),
                ],
                &[("noncentral_shift", CONTROL_GAP)],
            ),
        ),
        "axiom_e" => (
            t,
            bounds(
                &[
                    ("anti_equivariance", alg),
                    ("inverse", alg),
                    ("moment", alg),
                    ("form_pullback", alg),
                    ("conjugator_slice", alg),
                    ("u_flip_equivariance", EQUIV),
                ],
                &[("literal_group_part", CONTROL_GAP)],
            ),
        ),
        "hilbert_round_trip" => (
            t,
            bounds(
                &[
                    ("scheme_round_trip", EQUIV),
                    ("class_round_trip", EQUIV),
                    ("equivariance", EQUIV),
                    ("form_transport", TRANSPORT_TOL),
                ],
                &[("jet_product_not_one", CONTROL_GAP)],
            ),
        ),
        "fitting_orbits" => (
            config.trials.min(10),
            bounds(
                &[("conjugacy_matches_invariants", 0.0), ("kernel_criterion", 0.0), ("in_f_locus", 0.0)],
                &[("singular_g_stabilizer", 0.5)],
            ),
        ),
        "free_action" => (
            signatures(4).len() * config.trials.min(25),
            bounds(&[("stabilizer_dimension", 0.0)], &[("no_product_constraint", 0.5)]),
        ),
        other => return Err(MtvError::Usage(format!("unknown suite '{other}'"))),
    })
}

pub(crate) fn run_trial(config: &SuiteConfig, name: &str, t: usize, rng: &mut ChaCha8Rng) -> Result<Trial> {
    let mut out = Trial::default();
    match name {
        "polarization" => polarization(config, t, rng, &mut out)?,
        "hamiltonian_w" => hamiltonian_w(config, t, rng, &mut out)?,
        "closedness" => closedness(config, t, rng, &mut out)?,
        "form_identity" => form_identity(config, t, rng, &mut out)?,
        "axiom_d" => axiom_d(config, t, rng, &mut out)?,
        "gluing" => gluing(config, t, rng, &mut out)?,
        "theorem_2_4_i" => theorem_2_4_i(config, t, rng, &mut out)?,
        "axiom_e" => axiom_e(config, t, rng, &mut out)?,
        "hilbert_round_trip" => hilbert_round_trip(config, t, rng, &mut out)?,
        "fitting_orbits" => fitting_orbits(t, rng, &mut out)?,
        "free_action" => free_action(config, t, rng, &mut out)?,
        other => return Err(MtvError::Usage(format!("unknown suite '{other}'"))),
    }
    Ok(out)
}

/// `1 + t mod min(k, cap)`: cycles through the sizes up to the configured one.
fn size_for(config: &SuiteConfig, t: usize, cap: usize) -> usize {
    1 + t % config.k.min(cap).max(1)
}

/// All `(b, b')` with `1 <= b + b' <= max_n`.
pub(crate) fn signatures(max_n: usize) -> Vec<(usize, usize)> {
    (1..=max_n).flat_map(|n| (0..=n).rev().map(move |b| (b, n - b))).collect()
}

fn origin(n: usize) -> Vec<C64> {
    vec![ZERO; n]
}

fn rel(diff: f64, scale: f64) -> f64 {
    diff / (1.0 + scale)
}

fn flag(bad: bool) -> f64 {
    if bad {
        1.0
    } else {
        0.0
    }
}

fn random_utangent(n: usize, k: usize, rng: &mut ChaCha8Rng) -> UTangent {
    UTangent { a: (0..n).map(|_| sample_matrix(k, rng)).collect(), dc: sample_vector(k, rng) }
}

fn random_wtangent(k: usize, rng: &mut ChaCha8Rng) -> WTangent {
    WTangent { a: sample_matrix(k, rng), dc: sample_vector(k, rng) }
}

fn unit(v: Vec<C64>) -> Vec<C64> {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

fn orientation_for(t: usize) -> Orientation {
    if t % 2 == 0 {
        Orientation::Incoming
    } else {
        Orientation::Outgoing
    }
}

/// `tr` of the product over every ordering of `m - 1` copies of `x` and one
/// `y`, averaged: the full polarization evaluated at `(x, ..., x, y)`.
fn symmetrized_trace(x: &ComplexMatrix, y: &ComplexMatrix, m: usize) -> C64 {
    fn visit(slots: &mut Vec<usize>, used: &mut Vec<bool>, m: usize, f: &mut dyn FnMut(&[usize])) {
        if slots.len() == m {
            f(slots);
            return;
        }
        for i in 0..m {
            if !used[i] {
                used[i] = true;
                slots.push(i);
                visit(slots, used, m, f);
                slots.pop();
                used[i] = false;
            }
        }
    }
    let k = x.nrows();
    let mut total = ZERO;
    let mut count = 0.0;
    visit(&mut Vec::new(), &mut vec![false; m], m, &mut |order| {
        let prod = order
            .iter()
            .fold(linalg::identity(k), |acc, &i| acc * if i == 0 { y } else { x });
        total += linalg::trace(&prod);
        count += 1.0;
    });
    total / count
}

fn polarization(config: &SuiteConfig, t: usize, rng: &mut ChaCha8Rng, out: &mut Trial) -> Result<()> {
    let k = size_for(config, t, 5);
    let x = sample_matrix(k, rng);
    let coefficient = sample_disc(rng);
    let mut worst: f64 = 0.0;
    let mut commute: f64 = 0.0;
    for m in 1..=k {
        let p = InvariantPolynomial::new(m, coefficient)?;
        let grad = lie::polarized_gradient(&p, &x)?;
        for r in 0..k {
            for c in 0..k {
                let y = linalg::unit(k, r, c);
                let lhs = pair(&grad, &y);
                let oracle = coefficient * m as f64 * symmetrized_trace(&x, &y, m);
                worst = worst.max(rel((lhs - oracle).norm(), oracle.norm()));
            }
        }
        let scale = linalg::norm(&grad) * linalg::norm(&x);
        commute = commute.max(rel(lie::commutator_norm(&grad, &x), scale));
    }
    out.check("polarization_identity", worst);
    out.check("gradient_commutes", commute);

    // the oracle without the degree factor must disagree at degree 3
    let (x, y) = (sample_matrix(3, rng), sample_matrix(3, rng));
    let grad = lie::polarized_gradient(&InvariantPolynomial::new(3, coefficient)?, &x)?;
    let lhs = pair(&grad, &y);
    let wrong = coefficient * symmetrized_trace(&x, &y, 3);
    out.control("missing_degree_factor", (lhs - wrong).norm() / lhs.norm().max(f64::MIN_POSITIVE));
    Ok(())
}

fn hamiltonian_w(config: &SuiteConfig, t: usize, rng: &mut ChaCha8Rng, out: &mut Trial) -> Result<()> {
    let k = size_for(config, t, 4);
    let p0 = sample::sample_wpoint(k, orientation_for(t), rng);
    let chart = WChart::new(p0.clone());
    let t0 = origin(chart.dim());
    let v = unit(sample_vector(chart.dim(), rng));
    let step = config.fd_step;

    let xi = sample_matrix(k, rng);
    let xi = &xi / C64::new(linalg::norm(&xi), 0.0);
    let xi_sharp = chart.coords(&w::g_sharp(&p0, &xi)?);
    let h = fd::w_hamiltonian(&chart, &xi);
    out.check("group_moment", fd::fd_moment_condition(&chart, &h, &t0, &xi_sharp, &v, step, 1.0)?);

    let terms = sample::sample_invariants(k, rng);
    let a_sharp = chart.coords(&w::a_sharp(&terms, &p0)?);
    let ha = fd::a_hamiltonian(&chart, &terms);
    out.check("a_moment", fd::fd_moment_condition(&chart, &ha, &t0, &a_sharp, &v, step, 1.0)?);

    // with the opposite sign the residual is about 2 |omega(xi#, v)|
    let omega = chart.form(&t0, &xi_sharp, &v)?.norm();
    let flipped = fd::fd_moment_condition(&chart, &h, &t0, &xi_sharp, &v, step, -1.0)?;
    out.control("flipped_sign", flipped / omega.max(f64::MIN_POSITIVE));
    Ok(())
}

fn closedness(config: &SuiteConfig, t: usize, rng: &mut ChaCha8Rng, out: &mut Trial) -> Result<()> {
    let k = size_for(config, t, 3);
    let step = config.fd_step;
    let exterior = |chart: &dyn Chart, rng: &mut ChaCha8Rng| -> Result<f64> {
        let n = chart.dim();
        let (a, b, c) = (sample_vector(n, rng), sample_vector(n, rng), sample_vector(n, rng));
        Ok(fd::fd_exterior_derivative(chart, &origin(n), &a, &b, &c, step)?.norm())
    };

    let wchart = WChart::new(sample::sample_wpoint(k, orientation_for(t), rng));
    out.check("w_closed", exterior(&wchart, rng)?);

    let (b, bp) = (config.b.min(4), config.bprime.min(4 - config.b.min(4)));
    let (b, bp) = if b + bp == 0 { (1, 0) } else { (b, bp) };
    let uchart = UChart::new(sample::sample_uclass(k, b, bp, rng)?);
    out.check("u_closed", exterior(&uchart, rng)?);

    // every third trial uses a scheme with a repeated base point
    let d = if t % 3 == 2 && k >= 2 {
        let lengths = sample::sample_lengths(k, rng);
        let z = sample_disc(rng);
        sample::scheme_with(k, 1, 0, &lengths, &vec![z; lengths.len()], rng)?
    } else {
        sample::sample_jetscheme(k, 1, 0, rng)?
    };
    out.check("f_closed", exterior(&FChart::new(&d)?, rng)?);

    let kc = k.max(2);
    let mut weighted = WChart::new(sample::sample_wpoint(kc, orientation_for(t), rng));
    weighted.form = WForm::Weighted(ComplexMatrix::from_fn(kc, kc, |r, c| {
        if r == c {
            C64::new(1.0 + 4.0 * r as f64, 0.0)
        } else {
            ZERO
        }
    }));
    out.control("weighted_not_closed", exterior(&weighted, rng)?);
    Ok(())
}

fn form_identity(config: &SuiteConfig, t: usize, rng: &mut ChaCha8Rng, out: &mut Trial) -> Result<()> {
    let k = size_for(config, t, 5);
    let b = 1 + t % config.b.clamp(1, 4);
    let m = sample::sample_uclass(k, b, 0, rng)?;
    let (u, v) = (random_utangent(b, k, rng), random_utangent(b, k, rng));
    let printed = u::u_symplectic_printed(&m, &u, &v)?;
    let rewritten = u::u_symplectic_rewritten(&m, &u, &v)?;
    out.check("printed_vs_rewritten", rel((printed - rewritten).norm(), printed.norm()));

    let p = sample::sample_wpoint(k, Orientation::Incoming, rng);
    let (a, c) = (random_wtangent(k, rng), random_wtangent(k, rng));
    let lhs = w::eq1_lhs(&p, &a, &c)?;
    let rhs = w::eq1_rhs(&p, &a, &c)?;
    out.check("graded_bracket_sides", rel((lhs - rhs).norm(), lhs.norm()));

    // the closed form differs from the printed one by a bracket term
    let kc = k.max(2);
    let m = sample::sample_uclass(kc, b, 0, rng)?;
    let (u, v) = (random_utangent(b, kc, rng), random_utangent(b, kc, rng));
    let normative = u::u_symplectic(&m, &u, &v)?;
    let printed = u::u_symplectic_printed(&m, &u, &v)?;
    out.control("normative_vs_printed", rel((normative - printed).norm(), printed.norm()));
    Ok(())
}

/// Power-trace discrepancy with degree `m` measured against `1 + ||mu||^m`,
/// the size of the rounding error in `tr(mu^m)`.
fn scaled_trace_residual(points: &[WPoint]) -> Result<f64> {
    let mut traces = Vec::with_capacity(points.len());
    let mut norm: f64 = 0.0;
    for p in points {
        let mu = w::w_moment(p)?;
        norm = norm.max(linalg::norm(&mu));
        let y = if p.orientation == Orientation::Incoming { mu } else { -mu };
        traces.push(w::moment_coordinates(&y)?);
    }
    let mut worst: f64 = 0.0;
    for t in &traces[1..] {
        for (m, (a, b)) in traces[0].iter().zip(t).enumerate() {
            worst = worst.max(rel((a - b).norm(), norm.powi(m as i32 + 1)));
        }
    }
    Ok(worst)
}

fn factors(m: &UClass) -> Result<Vec<WPoint>> {
    (0..m.n()).map(|i| m.factor(i)).collect()
}

fn axiom_d(config: &SuiteConfig, t: usize, rng: &mut ChaCha8Rng, out: &mut Trial) -> Result<()> {
    let sigs = signatures(4);
    let (b, bp) = sigs[t % sigs.len()];
    let k = size_for(config, t, 5);
    let m = sample::sample_uclass(k, b, bp, rng)?;
    out.check("power_traces", scaled_trace_residual(&factors(&m)?)?);

    // one factor sits over a different slice point
    let m = sample::sample_uclass(k, b.max(1), bp.max(1), rng)?;
    let mut points = factors(&m)?;
    let last = points.len() - 1;
    points[last].x.coeffs[0] += C64::new(0.1, 0.0);
    out.control("perturbed_slice", scaled_trace_residual(&points)?);
    Ok(())
}

/// A class of signature `(c, c')` over `x` whose incoming factor `q` matches
/// the outgoing factor `g_p`: `h_q = g_p^{-1} w` with `w` in the centralizer.
fn partner(
    x: &SlicePoint,
    c: usize,
    cp: usize,
    q: usize,
    g_p: &ComplexMatrix,
    rng: &mut ChaCha8Rng,
) -> Result<(UClass, ComplexMatrix)> {
    let w = sample::sample_centralizer(x, rng)?;
    let mut gs: Vec<ComplexMatrix> = (0..c + cp).map(|_| sample_group(x.k, rng)).collect();
    gs[q] = inverse(g_p)? * &w;
    Ok((UClass::new(c, cp, gs, x.clone())?, w))
}

fn gluing(config: &SuiteConfig, t: usize, rng: &mut ChaCha8Rng, out: &mut Trial) -> Result<()> {
    let k = size_for(config, t, 4);
    let n1 = rng.random_range(1..=3usize);
    let b1p = rng.random_range(1..=n1);
    let b1 = n1 - b1p;
    let n2 = rng.random_range(if n1 == 1 { 2 } else { 1 }..=5 - n1);
    let c = rng.random_range(1..=n2);
    let cp = n2 - c;
    let m1 = sample::sample_uclass(k, b1, b1p, rng)?;
    let p = rng.random_range(0..b1p);
    let q = rng.random_range(0..c);
    let (m2, _) = partner(&m1.x, c, cp, q, &m1.gs[b1 + p], rng)?;

    let glued = u::glue(&m1, p, &m2, q)?;
    out.check("signature", flag((glued.b, glued.bprime) != (b1 + c - 1, b1p - 1 + cp)));

    let mut worst: f64 = 0.0;
    for a in 1..glued.n() {
        worst = worst.max(u::equivalence_residual(&glued, &u::glue_with_absorber(&m1, p, &m2, q, a)?)?);
    }
    out.check("absorber_choice", worst);

    let again = u::glue(&sample::regauge(&m1, rng)?, p, &sample::regauge(&m2, rng)?, q)?;
    out.check("representative_choice", u::equivalence_residual(&glued, &again)?);

    let g0 = sample_group(k, rng);
    let moved = u::glue(&u::g_action(&m1, b1 + p, &g0)?, p, &u::g_action(&m2, q, &g0)?, q)?;
    out.check("diagonal_action", u::equivalence_residual(&glued, &moved)?);

    // [g1, 1, X] glued against [h, X] with h central is [g1 h, X]
    let g1 = sample_group(k, rng);
    let e = UClass::new(1, 1, vec![g1.clone(), linalg::identity(k)], m1.x.clone())?;
    let h = sample::sample_centralizer(&m1.x, rng)?;
    let f = UClass::new(1, 0, vec![h.clone()], m1.x.clone())?;
    let expected = UClass::new(1, 0, vec![&g1 * &h], m1.x.clone())?;
    out.check("fixed_example", u::equivalence_residual(&u::glue(&e, 0, &f, 0)?, &expected)?);

    // dropping the centralizer element changes the class
    let (m2, _) = partner(&m1.x, c, cp, q, &m1.gs[b1 + p], rng)?;
    let glued = u::glue(&m1, p, &m2, q)?;
    let mut naive = glued.clone();
    let absorber = &mut naive.gs[0];
    let w = &m1.gs[b1 + p] * &m2.gs[q];
    *absorber = if glued.b > 0 { &*absorber * inverse(&w)? } else { inverse(&w)? * &*absorber };
    out.control("unabsorbed_factor", u::equivalence_residual(&glued, &naive)?);

    // at k = 1 every pair of moments cancels, so the mismatch needs k >= 2
    let kc = k.max(2);
    let m1 = sample::sample_uclass(kc, b1, b1p, rng)?;
    let (mut bad, _) = partner(&m1.x, c, cp, q, &m1.gs[b1 + p], rng)?;
    bad.gs[q] = sample_group(kc, rng);
    out.control("mismatch_rejected", flag(matches!(u::glue(&m1, p, &bad, q), Err(MtvError::Gluing(_)))));
    Ok(())
}

fn theorem_2_4_i(config: &SuiteConfig, t: usize, rng: &mut ChaCha8Rng, out: &mut Trial) -> Result<()> {
    let k = size_for(config, t, 5);
    let m = sample::sample_uclass(k, 1, 1, rng)?;
    let (g, y) = u::u11_to_tstar(&m)?;
    let scale = linalg::norm(&g) + linalg::norm(&y);

    let (g2, y2) = u::u11_to_tstar(&sample::regauge(&m, rng)?)?;
    let drift = linalg::norm(&(&g2 - &g)) + linalg::norm(&(&y2 - &y));
    out.check("constant_on_classes", rel(drift, scale));

    // equal images force equal classes: the inverse recovers the class
    out.check("injective", u::equivalence_residual(&u::tstar_to_u11(&g, &y)?, &m)?);

    let (g0, y0) = (sample_group(k, rng), sample_matrix(k, rng));
    let (g1, y1) = u::u11_to_tstar(&u::tstar_to_u11(&g0, &y0)?)?;
    let drift = linalg::norm(&(&g1 - &g0)) + linalg::norm(&(&y1 - &y0));
    out.check("round_trip", rel(drift, linalg::norm(&g0) + linalg::norm(&y0)));
    out.check("image_regular", flag(!lie::is_regular(&y)?));

    // shifting by a non-central element moves the image
    let kc = k.max(2);
    let m = sample::sample_uclass(kc, 1, 1, rng)?;
    let s = sample_group(kc, rng);
    let shifted = UClass::new(1, 1, vec![&m.gs[0] * &s, inverse(&s)? * &m.gs[1]], m.x.clone())?;
    let (g, y) = u::u11_to_tstar(&m)?;
    let (g2, y2) = u::u11_to_tstar(&shifted)?;
    let drift = linalg::norm(&(&g2 - &g)) + linalg::norm(&(&y2 - &y));
    out.control("noncentral_shift", rel(drift, linalg::norm(&g) + linalg::norm(&y)));
    Ok(())
}

fn point_distance(a: &WPoint, b: &WPoint) -> f64 {
    rel(linalg::norm(&(&a.g - &b.g)), linalg::norm(&a.g)) + a.x.distance(&b.x)
}

fn axiom_e(config: &SuiteConfig, t: usize, rng: &mut ChaCha8Rng, out: &mut Trial) -> Result<()> {
    let k = size_for(config, t, 4);
    let m = sample::sample_wpoint(k, Orientation::Incoming, rng);
    let g0 = sample_group(k, rng);
    let image = w::phi_e(&m)?;
    let lhs = w::phi_e(&m.act(&g0)?)?;
    let rhs = image.act(&w::theta(&g0, ThetaKind::Group)?)?;
    out.check("anti_equivariance", point_distance(&lhs, &rhs));
    out.check("inverse", point_distance(&w::phi_e_inverse(&image)?, &m));

    let mu = w::w_moment(&image)?;
    let expected = w::theta(&w::w_moment(&m)?, ThetaKind::Algebra)?;
    out.check("moment", rel(linalg::norm(&(&mu - &expected)), linalg::norm(&expected)));

    // phi pulls back the outgoing form: a -> (g a g^{-1})^T, dX fixed
    let (u, v) = (random_wtangent(k, rng), random_wtangent(k, rng));
    let g_inv = inverse(&m.g)?;
    let push = |a: &WTangent| WTangent { a: (&m.g * &a.a * &g_inv).transpose(), dc: a.dc.clone() };
    let before = w::w_symplectic(&m, &u, &v)?;
    let after = w::w_symplectic(&image, &push(&u), &push(&v))?;
    out.check("form_pullback", rel((after - before).norm(), before.norm()));

    let p = w::opposite_slice_conjugator(k)?;
    let p_inv = inverse(&p)?;
    let tr = slodowy::principal_triple(k)?;
    let mut drift: f64 = 0.0;
    for j in 0..k {
        let z = &tr.e.transpose() + linalg::matrix_power(&tr.f.transpose(), j);
        let conj = &p * z * &p_inv;
        let back = slodowy::slice_coordinates(&conj)?.embed();
        drift = drift.max(linalg::max_abs(&(back - &conj)));
    }
    out.check("conjugator_slice", drift);

    let sigs = signatures(3);
    let (b, bp) = sigs[t % sigs.len()];
    let b = b.max(1);
    let mu = sample::sample_uclass(k, b, bp, rng)?;
    let i = rng.random_range(0..b);
    let g1 = sample_group(k, rng);
    let flipped = u::u_flip(&mu, i)?;
    let last = flipped.n() - 1;
    let moved = u::u_flip(&u::g_action(&mu, i, &g1)?, i)?;
    let expected = u::g_action(&flipped, last, &w::theta(&g1, ThetaKind::Group)?)?;
    out.check("u_flip_equivariance", u::equivalence_residual(&moved, &expected)?);

    // the group part p theta(g)^{-1} p^{-1} breaks anti-equivariance
    let kc = k.max(2);
    let m = sample::sample_wpoint(kc, Orientation::Incoming, rng);
    let g0 = sample_group(kc, rng);
    let p = w::opposite_slice_conjugator(kc)?;
    let p_inv = inverse(&p)?;
    let literal = |g: &ComplexMatrix| &p * g.transpose() * &p_inv;
    let lhs = literal(&(&g0 * &m.g));
    let rhs = literal(&m.g) * inverse(&w::theta(&g0, ThetaKind::Group)?)?;
    out.control("literal_group_part", rel(linalg::norm(&(lhs - &rhs)), linalg::norm(&rhs)));
    Ok(())
}

fn hilbert_round_trip(config: &SuiteConfig, t: usize, rng: &mut ChaCha8Rng, out: &mut Trial) -> Result<()> {
    let k = size_for(config, t, 4);
    let sigs = signatures(3);
    let (b, bp) = sigs[t % sigs.len()];
    let d = sample::sample_jetscheme(k, b, bp, rng)?;
    let m = hilbert::hilb_to_u(&d)?;
    out.check("scheme_round_trip", hilbert::jet_distance(&hilbert::u_to_hilb(&m)?, &d)?);

    let r = sample::regauge(&m, rng)?;
    let back = hilbert::hilb_to_u(&hilbert::u_to_hilb(&r)?)?;
    out.check("class_round_trip", u::equivalence_residual(&back, &r)?);

    let mut acted_scheme = d.clone();
    let mut acted_class = m.clone();
    for j in 0..d.n() {
        let g = sample_group(k, rng);
        acted_scheme = hilbert::act_on_scheme(&acted_scheme, j, &g)?;
        acted_class = u::g_action(&acted_class, j, &g)?;
    }
    out.check("equivariance", u::equivalence_residual(&hilbert::hilb_to_u(&acted_scheme)?, &acted_class)?);

    // single-piece F^{1,0} against the W^{1,0} form through hilb_to_u
    let single = loop {
        let z = sample_disc(rng);
        let s = sample::scheme_with(k, 1, 0, &[k], &[z], rng)?;
        if hilbert::nondegenerate(&s) {
            break s;
        }
    };
    let chart = FChart::new(&single)?;
    let n = chart.dim();
    let (x, y) = (sample_vector(n, rng), sample_vector(n, rng));
    let f = chart.form(&origin(n), &x, &y)?;
    let (p0, tx) = fd::f_to_w_tangent(&chart, &x, TRANSPORT_STEP)?;
    let (_, ty) = fd::f_to_w_tangent(&chart, &y, TRANSPORT_STEP)?;
    let wv = w::w_symplectic(&p0, &tx, &ty)?;
    out.check("form_transport", rel((f - wv).norm(), f.norm()));

    // jets scaled by 2 in one factor only: the jet product is not 1
    let mut scaled = d.clone();
    for z in scaled.pieces[0].jets[0].iter_mut().flatten() {
        *z *= 2.0;
    }
    out.control("jet_product_not_one", u::equivalence_residual(&hilbert::hilb_to_u(&scaled)?, &m)?);
    Ok(())
}

fn integer_partitions(n: usize, max: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in (1..=n.min(max)).rev() {
        for mut rest in integer_partitions(n - first, first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Jordan types of size `k`: `(label, length)` blocks, one label per
/// eigenvalue.
fn jordan_types(k: usize) -> Vec<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for groups in integer_partitions(k, k) {
        let mut acc: Vec<Vec<(usize, usize)>> = vec![vec![]];
        for (label, &size) in groups.iter().enumerate() {
            let mut next = Vec::new();
            for prefix in &acc {
                for blocks in integer_partitions(size, size) {
                    let mut v = prefix.clone();
                    v.extend(blocks.iter().map(|&l| (label, l)));
                    next.push(v);
                }
            }
            acc = next;
        }
        out.extend(acc);
    }
    out
}

/// Ranks of `(mu - z)^p` for every candidate eigenvalue and power: equal
/// profiles on matrices with spectrum in `candidates` mean conjugate.
///
/// A candidate with `a` numerical eigenvalues within `1e-2` can only lose
/// rank among the `a` smallest singular values, and those count as zero below
/// `1e-8 (1 + ||mu||)^p`.
fn rank_profile(mu: &ComplexMatrix, candidates: &[C64]) -> Result<Vec<usize>> {
    let k = mu.nrows();
    let scale = 1.0 + linalg::norm(mu);
    let eigs = linalg::eigenvalues(mu)?;
    let mut out = Vec::new();
    for &z in candidates {
        let a = eigs.iter().filter(|e| (*e - z).norm() < 1e-2).count();
        let shifted = mu - linalg::identity(k) * z;
        let mut power = linalg::identity(k);
        for p in 1..=k {
            power = &power * &shifted;
            let cutoff = 1e-8 * scale.powi(p as i32);
            let mut sv: Vec<f64> = power.clone().svd(false, false).singular_values.iter().copied().collect();
            sv.sort_by(f64::total_cmp);
            out.push(k - sv.iter().take(a).filter(|&&s| s <= cutoff).count());
        }
    }
    Ok(out)
}

fn fitting_orbits(_t: usize, rng: &mut ChaCha8Rng, out: &mut Trial) -> Result<()> {
    let candidates = [ZERO, ONE, C64::new(0.0, 1.0), C64::new(0.5, 0.0)];
    let assignments: [[C64; 3]; 2] = [[ZERO, ONE, C64::new(0.0, 1.0)], [ONE, ZERO, C64::new(0.5, 0.0)]];
    let (mut mismatches, mut kernel_bad, mut outside_f) = (0usize, 0usize, 0usize);
    for k in 1..=3 {
        let mut samples: Vec<JetScheme> = Vec::new();
        for ty in jordan_types(k) {
            for zs in &assignments {
                let lengths: Vec<usize> = ty.iter().map(|b| b.1).collect();
                let bases: Vec<C64> = ty.iter().map(|b| zs[b.0]).collect();
                let first = sample::scheme_with(k, 1, 0, &lengths, &bases, rng)?;
                let second = sample::scheme_with(k, 1, 0, &lengths, &bases, rng)?;
                let moved = hilbert::act_on_scheme(&first, 0, &sample_group(k, rng))?;
                samples.extend([first, second, moved]);
            }
        }
        let profiles = samples
            .iter()
            .map(|d| rank_profile(&hilbert::f_moment(d, 0)?, &candidates))
            .collect::<Result<Vec<_>>>()?;
        let invariants: Vec<_> = samples.iter().map(hilbert::orbit_invariant).collect();
        for i in 0..samples.len() {
            for j in i + 1..samples.len() {
                let conjugate = profiles[i] == profiles[j];
                if conjugate != hilbert::invariants_equal(&invariants[i], &invariants[j], 1e-12) {
                    mismatches += 1;
                }
            }
        }
        for d in &samples {
            let in_f = hilbert::in_f_locus(d)?;
            outside_f += usize::from(!in_f);
            let degenerate = hilbert::f_kernel_dimension(d)? > 0;
            kernel_bad += usize::from(degenerate != (in_f && !hilbert::in_u_locus(d)));
        }
    }
    out.check("conjugacy_matches_invariants", mismatches as f64);
    out.check("kernel_criterion", kernel_bad as f64);
    out.check("in_f_locus", outside_f as f64);

    // equal leading vectors over two base points: G is singular
    let v = sample_vector(2, rng);
    let piece = |z: C64| hilbert::LocalPiece { z, length: 1, jets: vec![vec![v.clone()]] };
    let d = JetScheme::new(2, 1, 0, vec![piece(ZERO), piece(ONE)])?;
    out.control("singular_g_stabilizer", hilbert::stabilizer_dimension(&d, 0)? as f64);
    Ok(())
}

fn free_action(config: &SuiteConfig, t: usize, rng: &mut ChaCha8Rng, out: &mut Trial) -> Result<()> {
    let sigs = signatures(4);
    let (b, bp) = sigs[t % sigs.len()];
    let k = config.k.clamp(1, 5);
    let m = sample::sample_uclass(k, b, bp, rng)?;
    let mut worst = 0usize;
    let mut loose = usize::MAX;
    for i in 0..m.n() {
        worst = worst.max(u::stabilizer_dimension(&m, i, true)?);
        loose = loose.min(u::stabilizer_dimension(&m, i, false)?);
    }
    out.check("stabilizer_dimension", worst as f64);
    out.control("no_product_constraint", loose as f64);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signature_list() {
        assert_eq!(signatures(2), vec![(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]);
        assert_eq!(signatures(4).len(), 14);
    }

    #[test]
    fn jordan_type_counts() {
        // k = 3: (3), (2,1), (1,1,1) on one eigenvalue; 2 * 1 on two; 1 on three
        assert_eq!(jordan_types(1).len(), 1);
        assert_eq!(jordan_types(2).len(), 3);
        assert_eq!(jordan_types(3).len(), 6);
    }

    #[test]
    fn symmetrized_trace_of_identity() {
        let i = linalg::identity(3);
        assert!((symmetrized_trace(&i, &i, 4) - C64::new(3.0, 0.0)).norm() < 1e-14);
    }
}
