//! Numerical calculus on Carnot groups.
//!
//! The crate covers group arithmetic for the Euclidean, Heisenberg and H-type
//! catalog groups, horizontal differential operators, quadrature on graded
//! annular meshes, sharp Hardy inequality experiments and an explicit solver
//! for the degenerate parabolic problem `u_t = div_H(|grad_H u|^{p-2} grad_H u) + V u^{p-1}`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod error;
pub mod group;
pub mod hardy;
pub mod parabolic;
pub mod quadrature;
pub mod report;

pub use calculus::{FdScheme, HorizontalVector, ScalarField};
pub use error::{Error, Result};
pub use group::{CarnotGroup, GroupDescriptor, GroupKind, GroupPoint};
pub use hardy::{
    ConcentratingFamilySpec, ExtremalFamilySpec, PotentialKind, PotentialSpec, QuotientParts,
    RadialField, Route,
};
pub use parabolic::{BumpSpec, Diagnostics, EvolutionConfig, EvolutionState, GridSpec};
pub use quadrature::{AnnularMesh, BoxMesh, NodeSet};
