//! Numerical laboratory for geodesics in the space of Kahler potentials on
//! flat tori.
//!
//! The crate is organized around six subsystems:
//! - [`matrix_core`]: small dense complex matrix algebra, the block-matrix
//!   eigenvector dichotomy, and the obstruction certificate that rules out
//!   C^3 geodesics from boundary Hessian data;
//! - [`linear_model`]: the linearized foliation boundary-value system on the
//!   strip (eigenmode expansions, boundary matching, compatibility search);
//! - [`torus`]: flat torus grids, the involution z -> -z, and spectral
//!   Wirtinger calculus;
//! - [`potential`]: construction of h-invariant strongly psh boundary
//!   potentials with prescribed Hessian data at a fixed point;
//! - [`geodesic`]: the epsilon-regularized geodesic boundary-value solver
//!   with Newton continuation and its diagnostic ladder;
//! - [`foliation`]: leaf tracing, holomorphy residuals, and extraction of
//!   the linearization data from computed solutions.

pub mod cmatrix;
pub mod eigen;
pub mod error;
pub mod fft;
pub mod foliation;
pub mod geodesic;
pub mod io;
pub mod krylov;
pub mod linear_model;
pub mod matrix_core;
pub mod parallel;
pub mod potential;
pub mod rng;
pub mod torus;

pub use cmatrix::ComplexMatrix;
pub use error::{LabError, Result};
