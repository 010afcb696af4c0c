//! Martingales of a simple random walk and its running maximum.
//!
//! The crate computes the exact law of `(Z_t, M_t)` for a walk with steps
//! `+1, -1, 0` of probabilities `p, q, r` and uses it to check, with exact
//! rational arithmetic wherever the algebra allows:
//!
//! * difference-equation certificates for time-dependent functionals
//!   `f(t, M_t - Z_t, M_t)` and the Kennedy family built from them,
//! * the two-argument martingales `H(Z_t, M_t)` determined by a boundary
//!   function `F`,
//! * Doob's maximal and `L^p` inequalities (an equality for `p = q`),
//! * the `psi`-based embedding of centered measures into the symmetric walk.

pub mod embedding;
pub mod inequalities;
pub mod martingales;
pub mod measures;
pub mod rational;
pub mod walk;

pub use num_bigint::BigInt;
pub use num_rational::BigRational;

pub use embedding::{EmbeddingError, EmbeddingPlan, StoppedLaw};
pub use inequalities::{DoobReport, LpReport};
pub use martingales::{AzemaYorSpec, KennedyParams, TimeSpaceFunction};
pub use measures::{CenteredMeasure, MeasureError, MeasureKind};
pub use walk::{JointDist, PathSample, WalkError, WalkParams};
