//! Discrete total variation models and primal-dual solvers for grayscale
//! image restoration.
//!
//! The crate provides the four-direction difference operator and its
//! adjoint, interpolation operators that move dual samples between pixel
//! centres, edges and corners, six discrete TV functionals, the proximal
//! maps needed to minimise them, and two primal-dual solvers covering
//! denoising and block-average upscaling.

// `!(v > 0.0)` style checks are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diff;
pub mod error;
pub mod grid;
pub mod harness;
pub mod interp;
pub mod io;
pub mod linop;
pub mod prox;
pub mod selfcheck;
pub mod solver;
pub mod tv;

pub use error::{GridError, ImageIoError, ProxError, SolverError};
pub use grid::{group_l21_norm, inner_product, Field, Field2, Field4, Image};
pub use solver::{solve, ProblemSpec, SolveReport, SolverConfig};
pub use tv::{DualModel, Model};
