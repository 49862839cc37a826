//! Finite range decompositions of Green operators of discrete elliptic
//! systems `nabla^* A(x) nabla` on periodic lattices.
//!
//! The crate builds the levels `C_k` of a decomposition `C = sum_k C_k` from
//! averaged local Dirichlet projections, checks their range, positivity and
//! decay, and carries the discrete regularity estimates used to bound them.

pub mod archive;
pub mod coefficients;
pub mod config;
pub mod dense;
pub mod error;
pub mod frd;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod regularity;
pub mod report;
pub mod sampling;
pub mod sensitivity;
pub mod smoothing;
pub mod solver;

pub use coefficients::{CoefficientField, Mode, ModeKind, PerturbationSpec};
pub use error::{FrdError, Result};
pub use frd::{Decomposition, DecompositionPlan};
pub use lattice::{Cube, Field, MultiIndex, Torus};
pub use smoothing::AveragingOperator;
pub use solver::{EllipticOperator, KernelColumn, SolveReport};
