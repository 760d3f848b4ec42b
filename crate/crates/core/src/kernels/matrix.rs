use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::samples::SampleMatrix;
use super::scalar::ScalarRadialKernel;
use crate::error::{Result, ScoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `𝒦(x, y) = k(x, y) I_d`.
    Diagonal,
    /// `𝒦(x, y) = -∇²φ(x - y) = -4φ''(u) r rᵀ - 2φ'(u) I`, `r = x - y`.
    CurlFree,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Diagonal => "diagonal",
            KernelKind::CurlFree => "curl_free",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "diagonal" | "diag" => Ok(KernelKind::Diagonal),
            "curl_free" | "curlfree" | "cf" => Ok(KernelKind::CurlFree),
            other => Err(ScoreError::input(format!("unknown kernel kind '{other}'"))),
        }
    }
}

/// A matrix-valued kernel built from a scalar radial kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixKernelSpec {
    pub kind: KernelKind,
    pub scalar: ScalarRadialKernel,
}

impl MatrixKernelSpec {
    pub fn new(kind: KernelKind, scalar: ScalarRadialKernel) -> Self {
        MatrixKernelSpec { kind, scalar }
    }

    pub fn diagonal(scalar: ScalarRadialKernel) -> Self {
        Self::new(KernelKind::Diagonal, scalar)
    }

    pub fn curl_free(scalar: ScalarRadialKernel) -> Self {
        Self::new(KernelKind::CurlFree, scalar)
    }

    /// Scalar `β(u)` such that the divergence (w.r.t. the first argument) of
    /// `𝒦(x, y)ᵀ` equals `β(u)·(x - y)`.
    #[inline]
    pub(crate) fn divergence_factor(&self, u: f64, d: usize) -> f64 {
        let r = self.scalar.derivs_unchecked(u);
        match self.kind {
            KernelKind::Diagonal => 2.0 * r.d1,
            KernelKind::CurlFree => -4.0 * ((d as f64 + 2.0) * r.d2 + 2.0 * u * r.d3),
        }
    }
}

fn check_same_dim(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(ScoreError::input(format!(
            "dimension mismatch in {what}: {a} vs {b}"
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `𝒦(x, y)` as a dense `d x d` block.
pub fn eval_matrix_kernel(
    spec: &MatrixKernelSpec,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> Result<Array2<f64>> {
    check_same_dim(x.len(), y.len(), "eval_matrix_kernel")?;
    let d = x.len();
    let r = &x - &y;
    let u = r.dot(&r);
    let k = spec.scalar.derivs_unchecked(u);
    let mut out = Array2::zeros((d, d));
    match spec.kind {
        KernelKind::Diagonal => out.diag_mut().fill(k.phi),
        KernelKind::CurlFree => {
            for i in 0..d {
                for j in 0..d {
                    out[[i, j]] = -4.0 * k.d2 * (r[i] * r[j]);
                }
                out[[i, i]] -= 2.0 * k.d1;
            }
        }
    }
    Ok(out)
}

/// `𝒦_cf(x, y) a` in `O(d)` without forming the block.
pub fn curlfree_matvec(
    spec: &MatrixKernelSpec,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
    a: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    if spec.kind != KernelKind::CurlFree {
        return Err(ScoreError::contract("curlfree_matvec requires a curl-free kernel"));
    }
    check_same_dim(x.len(), y.len(), "curlfree_matvec")?;
    check_same_dim(x.len(), a.len(), "curlfree_matvec")?;
    let mut out = Array1::zeros(x.len());
    curlfree_block_apply(
        &spec.scalar,
        x.as_slice().unwrap_or(&x.to_vec()),
        y.as_slice().unwrap_or(&y.to_vec()),
        a.as_slice().unwrap_or(&a.to_vec()),
        out.as_slice_mut().expect("fresh array is contiguous"),
    );
    Ok(out)
}

/// `out += 𝒦_cf(x, y) a`, all slices of length `d`.
#[inline]
pub(crate) fn curlfree_block_apply(
    scalar: &ScalarRadialKernel,
    x: &[f64],
    y: &[f64],
    a: &[f64],
    out: &mut [f64],
) {
    let mut u = 0.0;
    let mut ra = 0.0;
    for i in 0..x.len() {
        let r = x[i] - y[i];
        u += r * r;
        ra += r * a[i];
    }
    let (d1, d2) = scalar.d1_d2(u);
    let coef = -4.0 * d2 * ra;
    let diag = -2.0 * d1;
    for i in 0..x.len() {
        out[i] += coef * (x[i] - y[i]) + diag * a[i];
    }
}

/// The divergence field `ζ̂(q) = (1/M) Σ_m div_{xᵐ} 𝒦(xᵐ, q)ᵀ` at one point.
pub fn zeta(
    spec: &MatrixKernelSpec,
    samples: &SampleMatrix,
    query: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    check_same_dim(samples.dim(), query.len(), "zeta")?;
    let q = query.to_owned().insert_axis(Axis(0));
    Ok(zeta_batch(spec, samples.view(), q.view()).row(0).to_owned())
}

/// `ζ̂` at every row of `queries`. Dimensions are assumed consistent.
pub(crate) fn zeta_batch(
    spec: &MatrixKernelSpec,
    samples: ArrayView2<'_, f64>,
    queries: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let (m, d) = samples.dim();
    let inv_m = 1.0 / m as f64;
    let x = samples.as_standard_layout();
    let mut out = Array2::zeros((queries.nrows(), d));
    for (q, mut row) in queries.outer_iter().zip(out.outer_iter_mut()) {
        let qv = q.to_vec();
        let row = row.as_slice_mut().expect("standard layout");
        let mut total = 0.0;
        for xm in x.outer_iter() {
            let xm = xm.to_slice().expect("standard layout");
            let beta = spec.divergence_factor(sq_dist(xm, &qv), d) * inv_m;
            total += beta;
            for i in 0..d {
                row[i] += beta * xm[i];
            }
        }
        for i in 0..d {
            row[i] -= total * qv[i];
        }
    }
    out
}

/// Squared distances between the rows of `a` and `b`.
pub(crate) fn pairwise_sq_dists(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    let a = a.as_standard_layout();
    let b = b.as_standard_layout();
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ai) in a.outer_iter().enumerate() {
        let ai = ai.to_slice().expect("standard layout");
        for (j, bj) in b.outer_iter().enumerate() {
            out[[i, j]] = sq_dist(ai, bj.to_slice().expect("standard layout"));
        }
    }
    out
}

/// `Σ_p 𝒦(q, x_p) c_p` for every query row `q`. `coeffs` is `P x d`, row `p`
/// holding `c_p`.
pub(crate) fn kernel_apply(
    spec: &MatrixKernelSpec,
    queries: ArrayView2<'_, f64>,
    points: ArrayView2<'_, f64>,
    coeffs: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let u = pairwise_sq_dists(queries, points);
    match spec.kind {
        KernelKind::Diagonal => u.mapv(|v| spec.scalar.value(v)).dot(&coeffs),
        KernelKind::CurlFree => {
            let mut a = Array2::zeros(u.dim());
            let mut g = Array2::zeros(u.dim());
            ndarray::Zip::from(&mut a).and(&mut g).and(&u).for_each(|a, g, &v| {
                let (d1, d2) = spec.scalar.d1_d2(v);
                *a = -2.0 * d1;
                *g = -4.0 * d2;
            });
            curlfree_combine(&a, &g, queries, points, coeffs)
        }
    }
}

/// Shared GEMM form of the curl-free product. With `A_qp = -2φ'` and
/// `G_qp = -4φ''`, block `(q, p)` applied to `c_p` is
/// `A_qp c_p + G_qp (rᵀc_p) r` with `r = q - x_p`, and
/// `rᵀc_p = qᵀc_p - x_pᵀc_p`.
pub(crate) fn curlfree_combine(
    a: &Array2<f64>,
    g: &Array2<f64>,
    queries: ArrayView2<'_, f64>,
    points: ArrayView2<'_, f64>,
    coeffs: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let mut w = queries.dot(&coeffs.t());
    let self_dot: Array1<f64> = (&points * &coeffs).sum_axis(Axis(1));
    ndarray::Zip::from(&mut w)
        .and(g)
        .and_broadcast(&self_dot.view().insert_axis(Axis(0)))
        .for_each(|w, &g, &s| *w = g * (*w - s));
    let mut out = a.dot(&coeffs);
    let row_sum = w.sum_axis(Axis(1));
    out += &(&queries * &row_sum.view().insert_axis(Axis(1)));
    out -= &w.dot(&points);
    out
}
