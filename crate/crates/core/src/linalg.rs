//! Dense symmetric eigendecomposition, SPD solves, matrix-free conjugate
//! gradient and spectral filtering.
//!
//! Dense factorizations go through LAPACK (`dsyevd`, `dpotrf`); everything
//! iterative is written against [`LinearOperator`] so Gram products can stay
//! implicit.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use ndarray_linalg::{CholeskyFactorized, Eigh, FactorizeC, SolveC, UPLO};

use crate::error::{Result, ScoreError};

/// Eigenvalues below `RANK_TOL * σ_max` count as zero for filters that act on
/// the non-zero spectrum only.
pub const RANK_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-10;
const CONDITION_LIMIT: f64 = 1e14;

/// Eigenpairs of a symmetric matrix, eigenvalues descending, eigenvectors in
/// the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest eigenvalue (0 for an empty system).
    pub fn max_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// Number of eigenvalues above the numerical rank threshold.
    pub fn numerical_rank(&self) -> usize {
        let cut = RANK_TOL * self.max_value();
        self.values.iter().filter(|&&s| s > cut).count()
    }

    /// `Σ σ_j u_j u_jᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.vectors * &self.values.view().insert_axis(Axis(0));
        scaled.dot(&self.vectors.t())
    }

    /// Divides every eigenvalue by `factor`, e.g. to go from `K` to `K/M`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.values.mapv_inplace(|v| v / factor);
        self
    }
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

fn check_square(a: &Array2<f64>, what: &str) -> Result<()> {
    if !a.is_square() {
        return Err(ScoreError::input(format!(
            "{what} needs a square matrix, got {:?}",
            a.dim()
        )));
    }
    Ok(())
}

fn check_symmetric(a: &Array2<f64>) -> Result<()> {
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[[i, j]] - a[[j, i]]).abs() > SYMMETRY_TOL * scale {
                return Err(ScoreError::contract(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Full eigendecomposition of a symmetric matrix.
pub fn sym_eig(k: &Array2<f64>) -> Result<EigenSystem> {
    check_square(k, "sym_eig")?;
    check_symmetric(k)?;
    if k.iter().any(|v| !v.is_finite()) {
        return Err(ScoreError::numeric("non-finite entry in eigen input"));
    }
    let (vals, vecs) = k
        .eigh(UPLO::Lower)
        .map_err(|e| ScoreError::Solver(format!("eigendecomposition failed: {e}")))?;
    // LAPACK returns ascending order; stable sort keeps ties in input order.
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    Ok(EigenSystem {
        values: order.iter().map(|&i| vals[i]).collect(),
        vectors: vecs.select(Axis(1), &order),
    })
}

/// Cholesky factor of an SPD matrix with a cheap conditioning check.
pub struct SpdFactor {
    factor: CholeskyFactorized<ndarray::OwnedRepr<f64>>,
}

impl SpdFactor {
    pub fn new(a: &Array2<f64>) -> Result<Self> {
        check_square(a, "solve_spd")?;
        let factor = a
            .factorizec(UPLO::Lower)
            .map_err(|e| ScoreError::Solver(format!("Cholesky factorization failed: {e}")))?;
        let diag = factor.factor.diag();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
        let cond = (hi / lo).powi(2);
        if !(cond.is_finite() && cond <= CONDITION_LIMIT) {
            return Err(ScoreError::Solver(format!(
                "matrix is numerically singular (condition estimate {cond:.3e})"
            )));
        }
        Ok(SpdFactor { factor })
    }

    pub fn solve(&self, b: &Array1<f64>) -> Result<Array1<f64>> {
        self.factor
            .solvec(b)
            .map_err(|e| ScoreError::Solver(format!("triangular solve failed: {e}")))
    }

    /// Solves for every column of `b`.
    pub fn solve_columns(&self, b: &Array2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros(b.dim());
        for (col, mut dst) in b.axis_iter(Axis(1)).zip(out.axis_iter_mut(Axis(1))) {
            dst.assign(&self.solve(&col.to_owned())?);
        }
        Ok(out)
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    if a.nrows() != b.len() {
        return Err(ScoreError::input(format!(
            "solve_spd: matrix is {}x{}, rhs has length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    SpdFactor::new(a)?.solve(b)
}

/// A symmetric PSD operator known only through its action on vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// `out = A x`.
    fn apply_into(&self, x: ArrayView1<'_, f64>, out: &mut Array1<f64>) -> Result<()>;

    fn apply(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(self.dim());
        self.apply_into(x, &mut out)?;
        Ok(out)
    }
}

impl LinearOperator for Array2<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply_into(&self, x: ArrayView1<'_, f64>, out: &mut Array1<f64>) -> Result<()> {
        ndarray::linalg::general_mat_vec_mul(1.0, self, &x, 0.0, out);
        Ok(())
    }
}

/// `A + shift·I`.
pub struct Shifted<'a, A: LinearOperator + ?Sized> {
    pub inner: &'a A,
    pub shift: f64,
}

impl<A: LinearOperator + ?Sized> LinearOperator for Shifted<'_, A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply_into(&self, x: ArrayView1<'_, f64>, out: &mut Array1<f64>) -> Result<()> {
        self.inner.apply_into(x, out)?;
        out.scaled_add(self.shift, &x);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Conjugate gradient for a symmetric PSD operator, stopping when
/// `‖b - Ax‖ ≤ tol·‖b‖`. Starts from zero.
pub fn conjugate_gradient(
    op: &(impl LinearOperator + ?Sized),
    b: &Array1<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(Array1<f64>, CgReport)> {
    if !(tol > 0.0) {
        return Err(ScoreError::input(format!("CG tolerance must be positive, got {tol}")));
    }
    if b.len() != op.dim() {
        return Err(ScoreError::input(format!(
            "CG: operator dimension {} vs rhs length {}",
            op.dim(),
            b.len()
        )));
    }
    let n = b.len();
    let mut x = Array1::zeros(n);
    let b_norm = b.dot(b).sqrt();
    if b_norm == 0.0 {
        return Ok((x, CgReport { iterations: 0, residual: 0.0, converged: true }));
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = Array1::zeros(n);
    let mut rr = r.dot(&r);
    let mut iterations = 0;
    while iterations < max_iter {
        if rr.sqrt() <= tol * b_norm {
            break;
        }
        op.apply_into(p.view(), &mut ap)?;
        if ap.iter().any(|v| !v.is_finite()) {
            return Err(ScoreError::numeric(format!(
                "operator produced non-finite output at CG iteration {iterations}"
            )));
        }
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(ScoreError::numeric(format!(
                "CG curvature pᵀAp = {pap:.3e} is not positive; operator is not PD"
            )));
        }
        let alpha = rr / pap;
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &ap);
        let rr_next = r.dot(&r);
        let beta = rr_next / rr;
        rr = rr_next;
        p *= beta;
        p += &r;
        iterations += 1;
    }
    let residual = rr.sqrt() / b_norm;
    Ok((
        x,
        CgReport { iterations, residual, converged: residual <= tol },
    ))
}

/// `Σ_j g(σ_j) (u_jᵀ v) u_j` over the full spectrum. Terms a regularizer
/// excludes are expressed by `g` returning zero.
pub fn apply_spectral_filter(
    eig: &EigenSystem,
    g: impl Fn(f64) -> f64,
    v: &Array1<f64>,
) -> Result<Array1<f64>> {
    if v.len() != eig.vectors.nrows() {
        return Err(ScoreError::input(format!(
            "spectral filter: vector length {} vs eigenvector length {}",
            v.len(),
            eig.vectors.nrows()
        )));
    }
    let mut proj = eig.vectors.t().dot(v);
    for (p, &s) in proj.iter_mut().zip(eig.values.iter()) {
        let w = g(s);
        if !w.is_finite() {
            return Err(ScoreError::numeric(format!(
                "spectral filter value {w} at eigenvalue {s:.3e}"
            )));
        }
        *p *= w;
    }
    Ok(eig.vectors.dot(&proj))
}

/// Largest eigenvalue of a PSD operator by power iteration from a fixed,
/// dense start vector. Stops early at `rel_tol` relative change.
pub fn power_iteration(
    op: &(impl LinearOperator + ?Sized),
    max_iter: usize,
    rel_tol: f64,
) -> Result<f64> {
    let n = op.dim();
    if n == 0 {
        return Ok(0.0);
    }
    // deterministic, non-degenerate start
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + ((i * 7919) % 97) as f64 / 97.0);
    v /= v.dot(&v).sqrt();
    let mut w = Array1::zeros(n);
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        op.apply_into(v.view(), &mut w)?;
        let next = v.dot(&w);
        let norm = w.dot(&w).sqrt();
        if !norm.is_finite() {
            return Err(ScoreError::numeric("power iteration diverged"));
        }
        if norm == 0.0 {
            return Ok(0.0);
        }
        v.assign(&w);
        v /= norm;
        let done = (next - estimate).abs() <= rel_tol * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    Ok(estimate)
}
