//! Derivative-free solvers for regularized nonlinear least squares
//! `min_x ||r(x)||^2 / 2 + h(x)` where only `r` values are available and `h`
//! is a convex regularizer with a cheap proximal operator.

// `!(a > b)` is used on purpose so that NaN parameters fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod interpolation;
pub mod regularizer;
pub mod smoothing;
pub mod solver;
pub mod subproblem;
pub mod testbed;

pub use error::{Error, Result};
pub use regularizer::Regularizer;
pub use solver::{solve, SolveResult, SolverConfig, Termination};
pub use testbed::{LeastSquares, NoiseModel, Problem};
