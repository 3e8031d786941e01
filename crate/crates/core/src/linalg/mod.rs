//! Dense linear algebra: matrices, SVD, energy truncation and projectors.

mod matrix;
mod projection;
mod svd;

pub use matrix::{dot, norm, Matrix};
pub use projection::{apply_projection, null_projector, orthonormality_error, rank_cutoff, ORTHONORMAL_TOL};
pub use svd::{svd, SvdResult};
