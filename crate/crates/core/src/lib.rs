//! Class unlearning by null-space projected gradient descent.
//!
//! A trained classifier forgets one or more classes by fine-tuning on the
//! forgotten samples under pseudo-labels drawn from the remaining classes,
//! while every weight update is projected away from the layer-input
//! subspace spanned by the remaining classes. Updates confined that way
//! leave the layer responses to remaining samples (to first order) intact.
//!
//! Modules:
//! * [`linalg`]: matrices, Jacobi SVD, energy truncation, projectors.
//! * [`nn`]: dense/conv networks, backprop, SGD training, checkpoints.
//! * [`subspace`]: per-class layer subspaces and merged null-space projectors.
//! * [`unlearn`]: pseudo-labelling, projected unlearning, baselines.
//! * [`eval`]: utility, membership inference, orthogonality audit, contours.
//! * [`data`]: Gaussian mixtures, splits, CSV/IDX files.
//! * [`experiment`]: the end-to-end toy pipeline and ablation grid.

pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod subspace;
pub mod unlearn;

pub use error::{Error, Result};
