//! Sparsity-penalized maximum-likelihood matrix completion under sparse
//! factor models `X = D A`, for Gaussian, Laplace, Poisson and one-bit
//! observations.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod likelihoods;
pub mod problem;
pub mod solver;
pub mod synth;
pub mod theory;

pub use error::{Error, Result};
pub use likelihoods::{Likelihood, LogisticLink};
pub use problem::{BoxBounds, CompletionProblem, FactorPair, SampleMask};
pub use solver::{admm_solve, AdmmConfig, AdmmSolution, Penalty};
