use ndarray::{concatenate, Array1, ArrayView1, Axis};

use crate::error::{Result, ScoreError};
use crate::kernels::{assemble_gram, h_vector, GramMode, MatrixKernelSpec, SampleMatrix};
use crate::linalg::solve_spd;

/// Out-of-sample Stein estimate by refitting: append `query` to the samples,
/// solve the in-sample system `-(K/M' + λI)⁻¹h` on the enlarged set and read
/// off the last block. Costs a full solve per query; kept as a reference
/// for the closed-form extension (`fit_truncated_tikhonov`).
pub fn stein_refit_score(
    samples: &SampleMatrix,
    spec: &MatrixKernelSpec,
    lambda: f64,
    query: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    if query.len() != samples.dim() {
        return Err(ScoreError::input("query dimension mismatch"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ScoreError::input(format!("lambda must be positive, got {lambda}")));
    }
    let d = samples.dim();
    let augmented = SampleMatrix::new(concatenate![Axis(0), samples.view(), query.insert_axis(Axis(0))])?;
    let m = augmented.len();
    let k = assemble_gram(spec, &augmented, GramMode::Dense)?.to_dense()?;
    let h = h_vector(spec, &augmented);
    let a = k / m as f64 + ndarray::Array2::<f64>::eye(m * d) * lambda;
    let s = -solve_spd(&a, &h)?;
    Ok(s.slice(ndarray::s![(m - 1) * d..]).to_owned())
}
