use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::regularizer::RegularizerSpec;
use crate::error::{Result, ScoreError};
use crate::kernels::{kernel_apply, pairwise_sq_dists, zeta_batch, KernelKind, MatrixKernelSpec, SampleMatrix};
use crate::linalg::CgReport;

/// Non-fatal notes recorded while fitting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitDiagnostics {
    pub cg: Option<CgReport>,
    pub warnings: Vec<String>,
}

/// An immutable fitted score estimator `ŝ(x) = a·ζ̂(x) + Σ_p 𝒦(x, z_p) c_p`,
/// where `z_p` ranges over all samples or, for Nyström fits, a subset.
#[derive(Debug, Clone)]
pub struct FittedScoreEstimator {
    pub(crate) spec: MatrixKernelSpec,
    pub(crate) samples: SampleMatrix,
    pub(crate) basis: Option<Vec<usize>>,
    pub(crate) coeffs: Array2<f64>,
    pub(crate) offset: f64,
    pub(crate) scheme: RegularizerSpec,
    pub(crate) diagnostics: FitDiagnostics,
}

impl FittedScoreEstimator {
    pub fn spec(&self) -> &MatrixKernelSpec {
        &self.spec
    }

    pub fn samples(&self) -> &SampleMatrix {
        &self.samples
    }

    pub fn scheme(&self) -> &RegularizerSpec {
        &self.scheme
    }

    /// Coefficient of `ζ̂` in the prediction.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Coefficients stacked sample-major (length `Md`, or `Nd` for Nyström).
    pub fn coefficients(&self) -> Array1<f64> {
        Array1::from_iter(self.coeffs.iter().copied())
    }

    /// One row of coefficients per basis point.
    pub fn coefficient_rows(&self) -> ArrayView2<'_, f64> {
        self.coeffs.view()
    }

    /// Nyström subset indices, `None` when every sample is a basis point.
    pub fn basis_indices(&self) -> Option<&[usize]> {
        self.basis.as_deref()
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn dim(&self) -> usize {
        self.samples.dim()
    }

    fn basis_points(&self) -> Array2<f64> {
        match &self.basis {
            Some(idx) => self.samples.view().select(Axis(0), idx),
            None => self.samples.as_array().clone(),
        }
    }

    fn check_queries(&self, queries: ArrayView2<'_, f64>) -> Result<()> {
        if queries.ncols() != self.dim() {
            return Err(ScoreError::input(format!(
                "queries have dimension {}, estimator expects {}",
                queries.ncols(),
                self.dim()
            )));
        }
        if queries.iter().any(|v| !v.is_finite()) {
            return Err(ScoreError::input("non-finite query entry"));
        }
        Ok(())
    }

    /// Score estimates at each row of `queries`.
    pub fn predict(&self, queries: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_queries(queries)?;
        let basis = self.basis_points();
        let mut out = kernel_apply(&self.spec, queries, basis.view(), self.coeffs.view());
        if self.offset != 0.0 {
            out.scaled_add(self.offset, &zeta_batch(&self.spec, self.samples.view(), queries));
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(ScoreError::numeric("prediction produced non-finite values"));
        }
        Ok(out)
    }

    pub fn predict_one(&self, query: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let q = query.insert_axis(Axis(0));
        Ok(self.predict(q)?.row(0).to_owned())
    }

    /// Unnormalized log density whose gradient is the fitted score, with the
    /// gauge `potential(x¹) = 0`. Curl-free kernels only.
    pub fn log_density(&self, queries: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if self.spec.kind != KernelKind::CurlFree {
            return Err(ScoreError::contract(
                "log-density recovery needs a curl-free kernel",
            ));
        }
        self.check_queries(queries)?;
        let raw = self.raw_potential(queries);
        let anchor = self.raw_potential(self.samples.view().slice(ndarray::s![0..1, ..]))[0];
        Ok(raw.mapv(|v| v - anchor))
    }

    /// Potential without the gauge. The kernel expansion term integrates to
    /// `-2 Σ_p φ'(‖x - z_p‖²)(x - z_p)ᵀc_p`; the `ζ̂` term integrates to
    /// `(a/M) Σ_m ψ(‖x - xᵐ‖²)` with `ψ(u) = 2dφ'(u) + 4uφ''(u)`.
    fn raw_potential(&self, queries: ArrayView2<'_, f64>) -> Array1<f64> {
        let scalar = self.spec.scalar;
        let d = self.dim() as f64;
        let basis = self.basis_points();
        let u = pairwise_sq_dists(queries, basis.view());
        // plain loops keep each row's value independent of the batch, so the
        // gauge point maps to exactly zero
        let mut out = Array1::zeros(queries.nrows());
        for (q, val) in out.iter_mut().enumerate() {
            let x = queries.row(q);
            let mut acc = 0.0;
            for p in 0..basis.nrows() {
                let d1 = scalar.derivs_unchecked(u[[q, p]]).d1;
                let mut dot = 0.0;
                for i in 0..x.len() {
                    dot += (x[i] - basis[[p, i]]) * self.coeffs[[p, i]];
                }
                acc += -2.0 * d1 * dot;
            }
            *val = acc;
        }
        if self.offset != 0.0 {
            let us = pairwise_sq_dists(queries, self.samples.view());
            let inv_m = 1.0 / self.samples.len() as f64;
            for (q, val) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for &v in us.row(q) {
                    let r = scalar.derivs_unchecked(v);
                    acc += 2.0 * d * r.d1 + 4.0 * v * r.d2;
                }
                *val += self.offset * inv_m * acc;
            }
        }
        out
    }
}

/// Score estimates at each row of `queries`.
pub fn predict(est: &FittedScoreEstimator, queries: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    est.predict(queries)
}

/// Unnormalized log density at one point (gauge: zero at the first sample).
pub fn recover_log_density(est: &FittedScoreEstimator, query: ArrayView1<'_, f64>) -> Result<f64> {
    Ok(est.log_density(query.insert_axis(Axis(0)))?[0])
}
