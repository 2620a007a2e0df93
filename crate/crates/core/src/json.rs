//! JSON shapes shared by every data file: a complex scalar is `[re, im]`, a
//! vector is a list of scalars, a matrix is a row-major list of rows.

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{ComplexMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scalar(pub [f64; 2]);

impl From<C64> for Scalar {
    fn from(z: C64) -> Self {
        Scalar([z.re, z.im])
    }
}

impl From<Scalar> for C64 {
    fn from(s: Scalar) -> Self {
        C64::new(s.0[0], s.0[1])
    }
}

fn finite<E: serde::de::Error>(z: C64) -> Result<C64, E> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(z)
    } else {
        Err(E::custom("non-finite complex entry"))
    }
}

pub mod scalar {
    use super::*;

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
        Scalar::from(*z).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        finite(Scalar::deserialize(d)?.into())
    }
}

pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        let out: Vec<Scalar> = v.iter().copied().map(Scalar::from).collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        Vec::<Scalar>::deserialize(d)?
            .into_iter()
            .map(|s| finite(s.into()))
            .collect()
    }
}

pub mod vectors {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Vec<C64>], s: S) -> Result<S::Ok, S::Error> {
        let out: Vec<Vec<Scalar>> = v
            .iter()
            .map(|row| row.iter().copied().map(Scalar::from).collect())
            .collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<C64>>, D::Error> {
        Vec::<Vec<Scalar>>::deserialize(d)?
            .into_iter()
            .map(|row| row.into_iter().map(|s| finite(s.into())).collect())
            .collect()
    }
}

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &ComplexMatrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Scalar>> = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| Scalar::from(m[(i, j)])).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ComplexMatrix, D::Error> {
        let rows = Vec::<Vec<Scalar>>::deserialize(d)?;
        let k = rows.len();
        if k == 0 {
            return Err(D::Error::custom("matrix must have at least one row"));
        }
        if rows.iter().any(|row| row.len() != k) {
            return Err(D::Error::custom("matrix must be square"));
        }
        let mut m = DMatrix::zeros(k, k);
        for (i, row) in rows.into_iter().enumerate() {
            for (j, s) in row.into_iter().enumerate() {
                m[(i, j)] = finite(s.into())?;
            }
        }
        Ok(m)
    }
}

pub mod matrices {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Wrapped(#[serde(with = "super::matrix")] ComplexMatrix);

    pub fn serialize<S: Serializer>(v: &[ComplexMatrix], s: S) -> Result<S::Ok, S::Error> {
        let out: Vec<Wrapped> = v.iter().cloned().map(Wrapped).collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<ComplexMatrix>, D::Error> {
        Ok(Vec::<Wrapped>::deserialize(d)?.into_iter().map(|w| w.0).collect())
    }
}

/// Standalone matrix wrapper for files that hold a single matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson(#[serde(with = "matrix")] pub ComplexMatrix);
