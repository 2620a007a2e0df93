//! Random data for the verification suites. Every sampler draws only from
//! the given rng, so a seeded stream reproduces the same objects.

use rand::Rng;

use crate::error::Result;
use crate::hilbert::{self, JetScheme, LocalPiece};
use crate::lie::{self, InvariantPolynomial};
use crate::linalg::{self, ComplexMatrix, C64};
use crate::slodowy::SlicePoint;
use crate::u::UClass;
use crate::w::{Orientation, WPoint};

/// Uniform in the closed unit disc.
pub fn sample_disc<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let r = rng.random::<f64>().sqrt();
    let t = rng.random::<f64>() * std::f64::consts::TAU;
    C64::from_polar(r, t)
}

pub fn sample_vector<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<C64> {
    (0..k).map(|_| sample_disc(rng)).collect()
}

pub fn sample_matrix<R: Rng + ?Sized>(k: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(k, k, |_, _| sample_disc(rng))
}

/// `exp` of a matrix with entries in the unit disc.
pub fn sample_group<R: Rng + ?Sized>(k: usize, rng: &mut R) -> ComplexMatrix {
    linalg::expm(&sample_matrix(k, rng))
}

pub fn sample_slice<R: Rng + ?Sized>(k: usize, rng: &mut R) -> SlicePoint {
    SlicePoint { k, coeffs: sample_vector(k, rng) }
}

pub fn sample_wpoint<R: Rng + ?Sized>(k: usize, orientation: Orientation, rng: &mut R) -> WPoint {
    let x = sample_slice(k, rng);
    let g = sample_group(k, rng);
    WPoint { orientation, g, x }
}

pub fn sample_uclass<R: Rng + ?Sized>(k: usize, b: usize, bprime: usize, rng: &mut R) -> Result<UClass> {
    let x = sample_slice(k, rng);
    let gs = (0..b + bprime).map(|_| sample_group(k, rng)).collect();
    UClass::new(b, bprime, gs, x)
}

/// A few invariant polynomials `c tr(X^m)` with random degrees and
/// coefficients.
pub fn sample_invariants<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<InvariantPolynomial> {
    let count = rng.random_range(1..=k.min(3));
    (0..count)
        .map(|_| InvariantPolynomial { degree: rng.random_range(1..=k), coefficient: sample_disc(rng) })
        .collect()
}

/// `exp(C_P(X))` for random `P`, with the generator scaled to norm at most
/// one: a well-conditioned element of the centralizer of `X`.
pub fn sample_centralizer<R: Rng + ?Sized>(x: &SlicePoint, rng: &mut R) -> Result<ComplexMatrix> {
    let terms = sample_invariants(x.k, rng);
    let c = lie::combined_gradient(&terms, &x.embed())?;
    let scale = linalg::norm(&c).max(1.0);
    Ok(linalg::expm(&(c / C64::new(scale, 0.0))))
}

/// Centralizer elements `u_1, ..., u_n` with product 1.
pub fn sample_relation<R: Rng + ?Sized>(x: &SlicePoint, n: usize, rng: &mut R) -> Result<Vec<ComplexMatrix>> {
    let mut us = Vec::with_capacity(n);
    let mut prod = linalg::identity(x.k);
    for _ in 1..n {
        let u = sample_centralizer(x, rng)?;
        prod = &prod * &u;
        us.push(u);
    }
    us.push(linalg::inverse(&prod)?);
    Ok(us)
}

/// A representative of the same class: `g_i u_i` on incoming and `u_i g_i`
/// on outgoing factors with `prod u_i = 1`.
pub fn regauge<R: Rng + ?Sized>(m: &UClass, rng: &mut R) -> Result<UClass> {
    let us = sample_relation(&m.x, m.n(), rng)?;
    let gs = m
        .gs
        .iter()
        .zip(&us)
        .enumerate()
        .map(|(i, (g, u))| if i < m.b { g * u } else { u * g })
        .collect();
    UClass::new(m.b, m.bprime, gs, m.x.clone())
}

/// A random composition of `k` into piece lengths.
pub fn sample_lengths<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<usize> {
    let mut out = Vec::new();
    let mut left = k;
    while left > 0 {
        let l = rng.random_range(1..=left);
        out.push(l);
        left -= l;
    }
    out
}

/// Base points in the disc of radius 1.5, pairwise at least `0.2` apart.
fn sample_base_points<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<C64> {
    let mut zs: Vec<C64> = Vec::with_capacity(count);
    while zs.len() < count {
        let z = sample_disc(rng) * 1.5;
        if zs.iter().all(|w| (z - w).norm() >= 0.2) {
            zs.push(z);
        }
    }
    zs
}

/// A transverse, nondegenerate scheme with random lengths, base points and
/// jets.
pub fn sample_jetscheme<R: Rng + ?Sized>(k: usize, b: usize, bprime: usize, rng: &mut R) -> Result<JetScheme> {
    loop {
        let lengths = sample_lengths(k, rng);
        let zs = sample_base_points(lengths.len(), rng);
        let d = scheme_with(k, b, bprime, &lengths, &zs, rng)?;
        if hilbert::nondegenerate(&d) {
            return Ok(d);
        }
    }
}

/// A scheme with prescribed lengths and base points and random jets; base
/// points may repeat.
pub fn scheme_with<R: Rng + ?Sized>(
    k: usize,
    b: usize,
    bprime: usize,
    lengths: &[usize],
    zs: &[C64],
    rng: &mut R,
) -> Result<JetScheme> {
    let pieces = lengths
        .iter()
        .zip(zs)
        .map(|(&l, &z)| LocalPiece {
            z,
            length: l,
            jets: (0..b + bprime).map(|_| (0..l).map(|_| sample_vector(k, rng)).collect()).collect(),
        })
        .collect();
    JetScheme::new(k, b, bprime, pieces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samplers_are_deterministic() {
        let a = sample_wpoint(3, Orientation::Incoming, &mut ChaCha8Rng::seed_from_u64(7));
        let b = sample_wpoint(3, Orientation::Incoming, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        assert!(lie::is_regular(&a.x.embed()).unwrap());
        assert!(linalg::det(&a.g).norm() > 0.0);
    }

    #[test]
    fn relation_multiplies_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = sample_slice(3, &mut rng);
        let us = sample_relation(&x, 4, &mut rng).unwrap();
        let p = us.iter().fold(linalg::identity(3), |acc, u| acc * u);
        assert!(linalg::max_abs(&(p - linalg::identity(3))) < 1e-10);
        for u in &us {
            assert!(lie::commutator_norm(u, &x.embed()) < 1e-10);
        }
    }

    #[test]
    fn sampled_schemes_are_in_the_u_locus() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let d = sample_jetscheme(4, 2, 1, &mut rng).unwrap();
            assert!(hilbert::in_u_locus(&d));
        }
    }
}
