use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use scorekit::estimators::{self, codec, Cutoff, FittedScoreEstimator, RegularizerSpec, CG_DEFAULT_MAX_ITER, CG_DEFAULT_TOL};
use scorekit::kernels::{KernelFamily, KernelKind, MatrixKernelSpec, SampleMatrix, ScalarRadialKernel};
use scorekit::oracles;
use scorekit::ScoreError;

fn to_py(e: ScoreError) -> PyErr {
    match e {
        ScoreError::Input(_) | ScoreError::Contract(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

/// A fitted kernel score estimator.
#[pyclass(name = "ScoreEstimator", module = "scorekit_py", frozen)]
struct PyScoreEstimator {
    inner: FittedScoreEstimator,
}

#[pymethods]
impl PyScoreEstimator {
    /// Fit on `samples` (a list of equal-length rows).
    ///
    /// `scheme` is one of tikhonov, tikhonov_cg, truncated_tikhonov,
    /// spectral_cutoff, landweber, nu_method, nystrom.
    #[staticmethod]
    #[pyo3(signature = (
        samples, scheme = "tikhonov", kernel = "curl_free", family = "imq", bandwidth = None,
        lam = 1e-3, iterations = 50, step = None, nu = 1.0, rank = None, subset = None, seed = 0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        samples: Vec<Vec<f64>>,
        scheme: &str,
        kernel: &str,
        family: &str,
        bandwidth: Option<f64>,
        lam: f64,
        iterations: usize,
        step: Option<f64>,
        nu: f64,
        rank: Option<usize>,
        subset: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let x = SampleMatrix::new(matrix(samples)?).map_err(to_py)?;
        let kind: KernelKind = kernel.parse().map_err(to_py)?;
        let family: KernelFamily = family.parse().map_err(to_py)?;
        let bw = match bandwidth {
            Some(b) => b,
            None => oracles::median_bandwidth(&x).map_err(to_py)?,
        };
        let spec = MatrixKernelSpec::new(kind, ScalarRadialKernel::new(family, bw).map_err(to_py)?);
        let scheme = scheme.to_owned();
        let inner = py
            .detach(move || match scheme.as_str() {
                "tikhonov" => estimators::fit_tikhonov(&x, &spec, lam),
                "tikhonov_cg" => estimators::fit_tikhonov_cg(&x, &spec, lam, CG_DEFAULT_TOL, CG_DEFAULT_MAX_ITER),
                "truncated_tikhonov" => estimators::fit_truncated_tikhonov(&x, &spec, lam),
                "spectral_cutoff" => {
                    let cut = rank.map_or(Cutoff::Threshold(lam), Cutoff::Rank);
                    estimators::fit_spectral_cutoff(&x, &spec, cut)
                }
                "landweber" => estimators::fit_landweber(&x, &spec, step, iterations),
                "nu_method" => estimators::fit_nu_method(&x, &spec, nu, iterations),
                "nystrom" => {
                    let idx = estimators::random_subset(x.len(), subset.unwrap_or(x.len().div_ceil(2)), seed)?;
                    estimators::fit_nystrom(&x, &idx, &spec, &RegularizerSpec::TruncatedTikhonov { lambda: lam })
                }
                other => Err(ScoreError::Input(format!("unknown scheme '{other}'"))),
            })
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Score estimates at each query row.
    fn predict(&self, py: Python<'_>, queries: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let q = matrix(queries)?;
        let out = py.detach(|| self.inner.predict(q.view())).map_err(to_py)?;
        Ok(rows(&out))
    }

    /// Unnormalized log density at each query row (curl-free kernels only).
    fn log_density(&self, py: Python<'_>, queries: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let q = matrix(queries)?;
        let out = py.detach(|| self.inner.log_density(q.view())).map_err(to_py)?;
        Ok(out.to_vec())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.diagnostics().warnings.clone()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &codec::encode(&self.inner))
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self { inner: codec::decode(data).map_err(to_py)? })
    }

    fn __repr__(&self) -> String {
        format!("ScoreEstimator(dim={}, scheme={:?})", self.inner.dim(), self.inner.scheme())
    }
}

/// Median pairwise distance of the rows.
#[pyfunction]
fn median_bandwidth(samples: Vec<Vec<f64>>) -> PyResult<f64> {
    let x = SampleMatrix::new(matrix(samples)?).map_err(to_py)?;
    oracles::median_bandwidth(&x).map_err(to_py)
}

#[pymodule]
fn scorekit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScoreEstimator>()?;
    m.add_function(wrap_pyfunction!(median_bandwidth, m)?)?;
    Ok(())
}
