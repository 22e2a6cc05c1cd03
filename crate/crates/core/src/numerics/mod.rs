//! Seeded randomness and the small dense linear algebra used across the
//! crate.

mod cholesky;
mod eigen;
mod matrix;
mod rng;

pub use cholesky::{cholesky, Cholesky, JITTER_CAP_REL, MAX_JITTER_RETRIES};
pub use eigen::{eigh, eigvalsh, Eigen};
pub use matrix::{dot, linspace, norm2, Matrix, PointSet, SymMatrix};
pub use rng::{standard_normal, Rng};
