//! Penalized composite link model for multidimensional grouped counts.
//!
//! Observed counts `y` are Poisson with mean `μ = Cγ`, where `γ = e ⊙ exp(Bα)`
//! is a smooth latent distribution on a finer grid, `C = C_d ⊗ .. ⊗ C_1`
//! groups fine cells and `B = B_d ⊗ .. ⊗ B_1` is a tensor-product B-spline
//! basis with a difference penalty on `α`.
//!
//! The estimator in [`solver`] works with a working latent response so that
//! every iteration reduces to array arithmetic ([`glam`]); neither `B` nor `C`
//! is ever formed. [`naive`] is the explicit-matrix reference used to check it.

// negated comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod components;
pub mod error;
pub mod glam;
pub mod linalg;
pub mod naive;
pub mod problem;
pub mod solver;
pub mod track;
pub mod uncertainty;

pub use array::{DenseMatrix, MatRef, NdArray};
pub use components::{
    aggregate, build_bspline_basis, build_composition, build_difference_matrix, build_penalty, BasisSpec,
    CompositionMatrix, GroupingSpec, PenaltySpec,
};
pub use error::{PclmError, Result};
pub use naive::{benchmark, fit_naive, naive_covariance, BenchmarkReport, Engine, NaiveFit};
pub use problem::{PclmProblem, SolverConfig};
pub use solver::{effective_dimension, fit, FitResult, IterationRecord, StopCriterion};
pub use uncertainty::{quantify, VarianceResult};
