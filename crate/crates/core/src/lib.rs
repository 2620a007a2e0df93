//! Open Moore-Tachikawa varieties `U^{b,b'}` for GL(k, C) and SL(k, C) as
//! concrete matrix data.
//!
//! * [`lie`]: pairing, power-trace invariants, polarized gradients, centralizers.
//! * [`slodowy`]: principal triple and the Slodowy slice `e + Z(f)`.
//! * [`w`]: the building blocks `W^{1,0}` and `W^{0,1}`: forms, actions,
//!   moment maps and the orientation-reversing map.
//! * [`u`]: the quotients `U^{b,b'}`: equivalence, actions, gluing.
//! * [`hilbert`]: transverse 0-dimensional subschemes and the presymplectic
//!   space `F_k^{1,0}`.
//! * [`harness`]: finite-difference checks, samplers and verification suites.

pub mod error;
pub mod harness;
pub mod hilbert;
pub mod json;
pub mod lie;
pub mod linalg;
pub mod slodowy;
pub mod u;
pub mod w;

pub use error::{MtvError, Result};
pub use hilbert::{FTangent, JetScheme, LocalPiece};
pub use lie::{AElement, InvariantPolynomial};
pub use linalg::{ComplexMatrix, C64};
pub use slodowy::{PrincipalTriple, SlicePoint};
pub use u::{UClass, UTangent, W00Point};
pub use w::{Orientation, WPoint, WTangent};
