//! Sparse recovery by iterative hard thresholding (IHT) and two perturbed
//! variants: IHT restarted from Gaussian-perturbed iterates, and a two-layer
//! unrolled IHT network whose weights are optimized with dropout.
//!
//! The crate also carries the experiment drivers used to compare the three
//! methods: a two-dimensional basin-of-attraction study and a grid sweep over
//! the number of measurements and the relative sparsity.

pub mod basin2d;
pub mod error;
pub mod experiments;
pub mod format;
pub mod linalg;
pub mod parametric;
pub mod problems;
pub mod render;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, DenseVector};
pub use problems::{EnsembleKind, MatrixEnsemble, ProblemInstance};
pub use rng::RngState;
pub use solvers::{Method, SolverResult};
