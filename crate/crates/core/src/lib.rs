//! Kolmogorov n-widths and intrinsic dimensions of point sets under a kernel.
//!
//! The pipeline is: generate or load a [`PointSet`], run the greedy
//! pivoted-Cholesky width engine ([`greedy::greedy_widths`]) and the metric
//! covering ([`greedy::greedy_cover`]), then turn the resulting curves into
//! dimension estimates with [`dimension`]. [`spectral`] provides eigenvalue
//! lower bounds on the same widths, and [`krr`] runs the constrained kernel
//! ridge regression excess-risk experiment.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dimension;
pub mod domains;
pub mod error;
pub mod greedy;
pub mod kernels;
pub mod krr;
pub mod points;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use kernels::{canonical_distance, eval_gram, eval_kernel, Kernel, KernelSpec};
pub use points::{load_points, save_points, PointSet};
