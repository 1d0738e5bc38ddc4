//! Row-sparse discriminative deep dictionary learning.
//!
//! A three-layer deep dictionary `X ≈ D1·φ(D2·φ(D3·Z))` is learned jointly
//! with split Bregman iterations. The deepest coefficients `Z` are forced to
//! share one support per class (row sparsity) and pushed away from the other
//! classes' mean features (support diversity). Test samples are encoded with
//! the same proxy scheme and classified by nearest training feature under an
//! `l0` or `l1` distance.
//!
//! The crate also carries the greedy layer-wise baseline, the evaluation
//! indices (OA, AA, Kappa, McNemar), hyperspectral feature extraction and a
//! text model format. The `rsddl` binary wires everything into a CLI.

pub mod cli;
pub mod dataio;
pub mod ddl;
pub mod error;
pub mod inference;
pub mod joint;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod sparse;

pub use error::{Error, Result};
pub use numerics::{Activation, ActivationKind, Matrix, Rng, Vector};
