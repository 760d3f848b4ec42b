//! Nonparametric score estimation `ŝ ≈ ∇log p` from samples.
//!
//! Estimators take the form `ŝ = -g_λ(L̂)ζ̂` where `L̂` is the empirical
//! integral operator of a matrix-valued kernel (diagonal or curl-free) and
//! `g_λ` is a spectral regularizer (Tikhonov, truncated Tikhonov, spectral
//! cut-off, Landweber, ν-method). Every fitted estimator predicts
//! `ŝ(x) = a·ζ̂(x) + K_{xX} c`.

// links the LAPACK/BLAS backend
extern crate blas_src;

pub mod bench;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod linalg;
pub mod oracles;

pub use error::{Result, ScoreError};
