//! Transfer learning for principal subspaces across studies.
//!
//! Subspaces are handled as orthogonal projectors on the Grassmann manifold.
//! Shared structure is estimated as a weighted Grassmannian barycenter of the
//! per-study estimates, optionally restricted to informative sources, and the
//! target's private directions are recovered inside its orthogonal
//! complement.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod grassmann;
pub mod linalg;
pub mod simulation;
pub mod transfer;

pub use error::{Error, Result};
pub use grassmann::{Projector, SubspaceDistance, WeightedProjectorSet};
pub use linalg::SymMatrix;
