//! Regularized score estimators built on the kernel Gram matrix.
//!
//! [`ScoreProblem`] owns the Gram matrix and `h` so several fits on the same
//! samples share them; the `fit_*` functions are one-shot wrappers.

pub mod codec;
mod fitted;
mod nystrom;
mod problem;
mod regularizer;

pub use fitted::{predict, recover_log_density, FitDiagnostics, FittedScoreEstimator};
pub use nystrom::{fit_nystrom, random_subset};
pub use problem::{ScoreProblem, CG_DEFAULT_MAX_ITER, CG_DEFAULT_TOL};
pub use regularizer::{
    default_landweber_step, landweber_filter, landweber_iterations, nu_coefficients,
    nu_iterations, nu_method_filter, resolve_threshold, Cutoff, RegularizerSpec,
};

use crate::error::Result;
use crate::kernels::{GramMode, MatrixKernelSpec, SampleMatrix};

fn iterative_mode(samples: &SampleMatrix, spec: &MatrixKernelSpec) -> GramMode {
    GramMode::for_iterative(spec.kind, samples.len(), samples.dim())
}

/// Direct-solve Tikhonov: `a = -1/λ`, `(K + MλI)c = h/λ`.
pub fn fit_tikhonov(samples: &SampleMatrix, spec: &MatrixKernelSpec, lambda: f64) -> Result<FittedScoreEstimator> {
    ScoreProblem::new(samples.clone(), *spec, GramMode::Dense)?.tikhonov(lambda)
}

/// Tikhonov with `c` from conjugate gradient on an implicit Gram matrix.
pub fn fit_tikhonov_cg(
    samples: &SampleMatrix,
    spec: &MatrixKernelSpec,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FittedScoreEstimator> {
    ScoreProblem::new(samples.clone(), *spec, iterative_mode(samples, spec))?.tikhonov_cg(lambda, tol, max_iter)
}

pub fn fit_truncated_tikhonov(samples: &SampleMatrix, spec: &MatrixKernelSpec, lambda: f64) -> Result<FittedScoreEstimator> {
    ScoreProblem::new(samples.clone(), *spec, GramMode::Dense)?.truncated_tikhonov(lambda)
}

pub fn fit_spectral_cutoff(samples: &SampleMatrix, spec: &MatrixKernelSpec, cutoff: Cutoff) -> Result<FittedScoreEstimator> {
    ScoreProblem::new(samples.clone(), *spec, GramMode::Dense)?.spectral_cutoff(cutoff)
}

/// `step = None` uses `0.9/σ̂_max` from power iteration.
pub fn fit_landweber(
    samples: &SampleMatrix,
    spec: &MatrixKernelSpec,
    step: Option<f64>,
    iterations: usize,
) -> Result<FittedScoreEstimator> {
    ScoreProblem::new(samples.clone(), *spec, iterative_mode(samples, spec))?.landweber(step, iterations)
}

pub fn fit_nu_method(samples: &SampleMatrix, spec: &MatrixKernelSpec, nu: f64, iterations: usize) -> Result<FittedScoreEstimator> {
    ScoreProblem::new(samples.clone(), *spec, iterative_mode(samples, spec))?.nu_method(nu, iterations)
}
