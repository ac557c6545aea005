//! Duality-based solver for `l1`-regularized data-fitting problems posed over
//! the sequence space `l1(N)`.
//!
//! The infinite-dimensional problem
//! `min |y0 - A x|_1 + rho |x|_1` is solved through its dual, a linear
//! program in `m` variables with a finite number of effective constraints.
//! The dual solution identifies a finite index set carrying the support of a
//! primal solution, and a fixed-point proximity iteration solves the
//! remaining finite problem.

pub mod error;
pub mod experiments;
pub mod fppa;
pub mod linalg;
pub mod lp;
pub mod norms;
pub mod operators;
pub mod pipeline;
pub mod polytope;

pub use error::{Error, Result};
pub use norms::{DenseVec, SparseSeq};
