//! Dense kernels shared by every trainer: pseudo-inverse, regularized least
//! squares, PCA, activations and the seeded random stream.
//!
//! Matrices store samples as columns.

mod activation;
pub(crate) mod linalg;
mod pca;
mod rng;

pub use activation::{Activation, ActivationKind};
pub use linalg::{
    column_norms, ensure_finite, from_row_major, normalize_dictionary, pinv, ridge_solve,
    ridge_solve_with_diagnostics, solve_spd, RidgeDiagnostics, DEFAULT_PINV_TOL,
};
pub use pca::{pca_fit, Pca};
pub use rng::Rng;

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
pub(crate) use linalg as linalg_internal;
