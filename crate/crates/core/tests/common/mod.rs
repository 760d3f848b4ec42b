//! Dense reference implementations used as test oracles. Everything here is
//! built entry by entry from `eval_matrix_kernel`/`zeta` and solved with
//! LAPACK directly, independent of the library's Gram and solver code.
#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView1};
use ndarray_linalg::{Eigh, Solve, UPLO};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scorekit::kernels::{eval_matrix_kernel, zeta, MatrixKernelSpec, SampleMatrix, ScalarRadialKernel};

pub fn random_samples(m: usize, d: usize, seed: u64) -> SampleMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SampleMatrix::new(Array2::from_shape_fn((m, d), |_| rng.gen_range(-1.5..1.5))).unwrap()
}

pub fn random_points(q: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((q, d), |_| rng.gen_range(-2.0..2.0))
}

/// Both kernel kinds over both families at a moderate bandwidth.
pub fn all_specs(bandwidth: f64) -> Vec<MatrixKernelSpec> {
    let mut out = vec![];
    for scalar in [ScalarRadialKernel::imq(bandwidth).unwrap(), ScalarRadialKernel::gaussian(bandwidth).unwrap()] {
        out.push(MatrixKernelSpec::diagonal(scalar));
        out.push(MatrixKernelSpec::curl_free(scalar));
    }
    out
}

/// `K_AB` assembled block by block.
pub fn dense_cross(spec: &MatrixKernelSpec, a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let d = a.ncols();
    let mut k = Array2::zeros((a.nrows() * d, b.nrows() * d));
    for p in 0..a.nrows() {
        for l in 0..b.nrows() {
            let blk = eval_matrix_kernel(spec, a.row(p), b.row(l)).unwrap();
            for i in 0..d {
                for j in 0..d {
                    k[[p * d + i, l * d + j]] = blk[[i, j]];
                }
            }
        }
    }
    k
}

pub fn dense_gram(spec: &MatrixKernelSpec, x: &SampleMatrix) -> Array2<f64> {
    dense_cross(spec, x.as_array(), x.as_array())
}

pub fn dense_h(spec: &MatrixKernelSpec, x: &SampleMatrix) -> Array1<f64> {
    let mut h = Vec::new();
    for m in 0..x.len() {
        h.extend(zeta(spec, x, x.row(m)).unwrap());
    }
    Array1::from(h)
}

/// `a·ζ̂(q) + Σ_p 𝒦(q, z_p) c_p` for every query row.
pub fn oracle_predict(
    spec: &MatrixKernelSpec,
    x: &SampleMatrix,
    basis: &Array2<f64>,
    a: f64,
    c: &Array1<f64>,
    queries: &Array2<f64>,
) -> Array2<f64> {
    let d = x.dim();
    let mut out = Array2::zeros((queries.nrows(), d));
    for q in 0..queries.nrows() {
        let mut row = zeta(spec, x, queries.row(q)).unwrap() * a;
        for p in 0..basis.nrows() {
            let blk = eval_matrix_kernel(spec, queries.row(q), basis.row(p)).unwrap();
            row += &blk.dot(&c.slice(ndarray::s![p * d..(p + 1) * d]));
        }
        out.row_mut(q).assign(&row);
    }
    out
}

pub fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    a.solve(b).unwrap()
}

/// Ascending eigenpairs straight from LAPACK.
pub fn eigh(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    a.eigh(UPLO::Lower).unwrap()
}

/// `Σ_j f(σ_j) u_j u_jᵀ v` for a symmetric matrix.
pub fn spectral_apply(a: &Array2<f64>, f: impl Fn(f64) -> f64, v: &Array1<f64>) -> Array1<f64> {
    let (vals, vecs) = eigh(a);
    let proj = vecs.t().dot(v);
    let scaled = Array1::from_iter(proj.iter().zip(vals.iter()).map(|(p, &s)| p * f(s)));
    vecs.dot(&scaled)
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn stacked(a: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(a.iter().copied())
}

pub fn norm(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}
