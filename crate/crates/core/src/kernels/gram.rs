use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::matrix::{
    curlfree_block_apply, curlfree_combine, pairwise_sq_dists, zeta_batch, KernelKind,
    MatrixKernelSpec,
};
use super::samples::SampleMatrix;
use crate::error::{Result, ScoreError};
use crate::linalg::{apply_spectral_filter, sym_eig, EigenSystem, LinearOperator};

/// Dense `Md x Md` matrices larger than this are refused.
pub const DENSE_BUDGET_BYTES: usize = 2 << 30;

/// How the Gram matrix is stored. Chosen explicitly by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramMode {
    /// Materialized. Diagonal kernels keep only the scalar `M x M` factor of
    /// `k(X, X) ⊗ I_d`.
    Dense,
    /// Samples only; every product walks all sample pairs with the `O(d)`
    /// block product. `O(Md)` extra memory.
    Implicit,
    /// Samples plus the `M x M` radial coefficient tables, products as
    /// matrix-matrix multiplications. `O(M² + Md)` memory.
    Factored,
}

/// Iterative fits materialize the Gram matrix only below this size.
const ITERATIVE_DENSE_BYTES: usize = 256 << 20;

impl GramMode {
    /// Storage for iterative (matrix-product only) fits: dense while it is
    /// small, otherwise the factored form for curl-free kernels. Diagonal
    /// kernels are always dense, since their dense form is `M x M`.
    pub fn for_iterative(kind: KernelKind, m: usize, d: usize) -> GramMode {
        let n = m.saturating_mul(d);
        match kind {
            KernelKind::Diagonal => GramMode::Dense,
            KernelKind::CurlFree if n.saturating_mul(n).saturating_mul(8) <= ITERATIVE_DENSE_BYTES => GramMode::Dense,
            KernelKind::CurlFree => GramMode::Factored,
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Dense(Array2<f64>),
    /// Scalar Gram `k(X, X)`; the full matrix is `scalar ⊗ I_d`.
    Kronecker(Array2<f64>),
    Implicit,
    /// `a = -2φ'(u)`, `g = -4φ''(u)` over all sample pairs.
    Factored { a: Array2<f64>, g: Array2<f64> },
}

/// Dense storage: the full matrix, or the scalar factor of `s ⊗ I_d`.
pub(crate) enum DenseView<'a> {
    Full(&'a Array2<f64>),
    Scalar(&'a Array2<f64>),
}

/// The `Md x Md` block matrix `K[(m,i),(l,j)] = 𝒦(xᵐ, xˡ)_{ij}`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    spec: MatrixKernelSpec,
    samples: Array2<f64>,
    repr: Repr,
}

/// Builds the Gram matrix in the requested mode.
pub fn assemble_gram(
    spec: &MatrixKernelSpec,
    samples: &SampleMatrix,
    mode: GramMode,
) -> Result<GramMatrix> {
    let x = samples.view();
    let (m, d) = x.dim();
    let repr = match (spec.kind, mode) {
        (KernelKind::Diagonal, GramMode::Dense | GramMode::Factored) => {
            Repr::Kronecker(pairwise_sq_dists(x, x).mapv(|u| spec.scalar.value(u)))
        }
        (_, GramMode::Implicit) => Repr::Implicit,
        (KernelKind::CurlFree, GramMode::Factored) => {
            let u = pairwise_sq_dists(x, x);
            let mut a = Array2::zeros((m, m));
            let mut g = Array2::zeros((m, m));
            ndarray::Zip::from(&mut a).and(&mut g).and(&u).for_each(|a, g, &v| {
                let (d1, d2) = spec.scalar.d1_d2(v);
                *a = -2.0 * d1;
                *g = -4.0 * d2;
            });
            Repr::Factored { a, g }
        }
        (KernelKind::CurlFree, GramMode::Dense) => {
            let n = m * d;
            let bytes = n.saturating_mul(n).saturating_mul(8);
            if bytes > DENSE_BUDGET_BYTES {
                return Err(ScoreError::Resource(format!(
                    "dense {n}x{n} Gram needs {bytes} bytes, budget is {DENSE_BUDGET_BYTES}"
                )));
            }
            Repr::Dense(dense_curlfree(spec, x))
        }
    };
    Ok(GramMatrix { spec: *spec, samples: x.to_owned(), repr })
}

fn dense_curlfree(spec: &MatrixKernelSpec, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let (m, d) = x.dim();
    let mut k = Array2::zeros((m * d, m * d));
    let mut r = vec![0.0; d];
    for p in 0..m {
        for l in p..m {
            let mut u = 0.0;
            for i in 0..d {
                r[i] = x[[p, i]] - x[[l, i]];
                u += r[i] * r[i];
            }
            let (d1, d2) = spec.scalar.d1_d2(u);
            for i in 0..d {
                for j in 0..d {
                    let mut v = -4.0 * d2 * r[i] * r[j];
                    if i == j {
                        v -= 2.0 * d1;
                    }
                    k[[p * d + i, l * d + j]] = v;
                    k[[l * d + j, p * d + i]] = v;
                }
            }
        }
    }
    k
}

/// Cross Gram `K_AB` (`|A|d x |B|d`) for a curl-free kernel, or the scalar
/// `k(A, B)` (`|A| x |B|`) for a diagonal kernel.
pub(crate) fn cross_gram(
    spec: &MatrixKernelSpec,
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let u = pairwise_sq_dists(a, b);
    if spec.kind == KernelKind::Diagonal {
        return u.mapv(|v| spec.scalar.value(v));
    }
    let (na, d) = a.dim();
    let nb = b.nrows();
    let mut k = Array2::zeros((na * d, nb * d));
    let mut r = vec![0.0; d];
    for p in 0..na {
        for l in 0..nb {
            for i in 0..d {
                r[i] = a[[p, i]] - b[[l, i]];
            }
            let (d1, d2) = spec.scalar.d1_d2(u[[p, l]]);
            for i in 0..d {
                for j in 0..d {
                    let mut v = -4.0 * d2 * (r[i] * r[j]);
                    if i == j {
                        v -= 2.0 * d1;
                    }
                    k[[p * d + i, l * d + j]] = v;
                }
            }
        }
    }
    k
}

impl GramMatrix {
    pub fn spec(&self) -> &MatrixKernelSpec {
        &self.spec
    }

    pub fn num_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn sample_dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    /// Side length `Md`.
    pub fn size(&self) -> usize {
        self.samples.len()
    }

    pub fn mode(&self) -> GramMode {
        match self.repr {
            Repr::Dense(_) | Repr::Kronecker(_) => GramMode::Dense,
            Repr::Implicit => GramMode::Implicit,
            Repr::Factored { .. } => GramMode::Factored,
        }
    }

    /// Stored dense content, if any.
    pub(crate) fn dense_view(&self) -> Option<DenseView<'_>> {
        match &self.repr {
            Repr::Dense(k) => Some(DenseView::Full(k)),
            Repr::Kronecker(s) => Some(DenseView::Scalar(s)),
            _ => None,
        }
    }

    /// True when a spectral decomposition is available without assembly.
    pub fn supports_spectrum(&self) -> bool {
        matches!(self.repr, Repr::Dense(_) | Repr::Kronecker(_))
    }

    /// Bytes held by the stored representation, samples included.
    pub fn storage_bytes(&self) -> usize {
        let extra = match &self.repr {
            Repr::Dense(k) | Repr::Kronecker(k) => k.len(),
            Repr::Implicit => 0,
            Repr::Factored { a, g } => a.len() + g.len(),
        };
        (extra + self.samples.len()) * std::mem::size_of::<f64>()
    }

    /// The full `Md x Md` matrix. Fails with a resource error past the budget.
    pub fn to_dense(&self) -> Result<Array2<f64>> {
        match &self.repr {
            Repr::Dense(k) => Ok(k.clone()),
            Repr::Kronecker(s) => {
                let d = self.sample_dim();
                let n = self.size();
                check_budget(n)?;
                let mut k = Array2::zeros((n, n));
                for ((p, l), &v) in s.indexed_iter() {
                    for i in 0..d {
                        k[[p * d + i, l * d + i]] = v;
                    }
                }
                Ok(k)
            }
            Repr::Implicit | Repr::Factored { .. } => {
                check_budget(self.size())?;
                match self.spec.kind {
                    KernelKind::CurlFree => Ok(dense_curlfree(&self.spec, self.samples.view())),
                    KernelKind::Diagonal => {
                        let x = self.samples.view();
                        let s = pairwise_sq_dists(x, x).mapv(|u| self.spec.scalar.value(u));
                        GramMatrix { repr: Repr::Kronecker(s), ..self.clone() }.to_dense()
                    }
                }
            }
        }
    }

    /// `K b`, with `b` laid out sample-major (`b[(m-1)d + i]`).
    pub fn matvec(&self, b: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(self.size());
        self.matvec_into(b, &mut out)?;
        Ok(out)
    }

    fn matvec_into(&self, b: ArrayView1<'_, f64>, out: &mut Array1<f64>) -> Result<()> {
        if b.len() != self.size() {
            return Err(ScoreError::input(format!(
                "gram_matvec: vector length {} vs Gram size {}",
                b.len(),
                self.size()
            )));
        }
        let (m, d) = self.samples.dim();
        let b_owned;
        let b_slice = match b.as_slice() {
            Some(s) => s,
            None => {
                b_owned = b.to_vec();
                &b_owned
            }
        };
        let bm = ArrayView2::from_shape((m, d), b_slice).expect("length checked above");
        match &self.repr {
            Repr::Dense(k) => {
                ndarray::linalg::general_mat_vec_mul(1.0, k, &b, 0.0, out);
            }
            Repr::Kronecker(s) => {
                let prod = s.dot(&bm);
                out.assign(&ArrayView1::from(prod.as_slice().expect("fresh array")));
            }
            Repr::Factored { a, g } => {
                let x = self.samples.view();
                let prod = curlfree_combine(a, g, x, x, bm);
                out.assign(&ArrayView1::from(prod.as_slice().expect("fresh array")));
            }
            Repr::Implicit => {
                out.fill(0.0);
                let x = self.samples.as_slice().expect("owned standard layout");
                let o = out.as_slice_mut().expect("contiguous");
                for p in 0..m {
                    let xp = &x[p * d..(p + 1) * d];
                    let op = &mut o[p * d..(p + 1) * d];
                    for l in 0..m {
                        let xl = &x[l * d..(l + 1) * d];
                        let bl = &b_slice[l * d..(l + 1) * d];
                        match self.spec.kind {
                            KernelKind::CurlFree => {
                                curlfree_block_apply(&self.spec.scalar, xp, xl, bl, op)
                            }
                            KernelKind::Diagonal => {
                                let k = self.spec.scalar.value(super::matrix::sq_dist(xp, xl));
                                for i in 0..d {
                                    op[i] += k * bl[i];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Eigendecomposition of `K/M`. Only dense representations qualify.
    pub fn spectrum(&self) -> Result<GramSpectrum> {
        let m = self.num_samples() as f64;
        match &self.repr {
            Repr::Dense(k) => Ok(GramSpectrum::Full(sym_eig(k)?.scaled(m))),
            Repr::Kronecker(s) => Ok(GramSpectrum::Kronecker {
                scalar: sym_eig(s)?.scaled(m),
                d: self.sample_dim(),
            }),
            Repr::Implicit | Repr::Factored { .. } => Err(ScoreError::contract(
                "spectral regularizers need a dense Gram matrix; assemble with GramMode::Dense",
            )),
        }
    }
}

fn check_budget(n: usize) -> Result<()> {
    let bytes = n.saturating_mul(n).saturating_mul(8);
    if bytes > DENSE_BUDGET_BYTES {
        return Err(ScoreError::Resource(format!(
            "dense {n}x{n} Gram needs {bytes} bytes, budget is {DENSE_BUDGET_BYTES}"
        )));
    }
    Ok(())
}

impl LinearOperator for GramMatrix {
    fn dim(&self) -> usize {
        self.size()
    }

    fn apply_into(&self, x: ArrayView1<'_, f64>, out: &mut Array1<f64>) -> Result<()> {
        self.matvec_into(x, out)
    }
}

/// Free-function form of [`GramMatrix::matvec`].
pub fn gram_matvec(gram: &GramMatrix, b: &Array1<f64>) -> Result<Array1<f64>> {
    gram.matvec(b.view())
}

/// `h = (ζ̂(x¹), …, ζ̂(xᴹ))` stacked sample-major.
pub fn h_vector(spec: &MatrixKernelSpec, samples: &SampleMatrix) -> Array1<f64> {
    let z = zeta_batch(spec, samples.view(), samples.view());
    Array1::from(z.into_raw_vec())
}

/// Eigendecomposition of `K/M`, exploiting `k(X,X) ⊗ I_d` for diagonal kernels.
#[derive(Debug, Clone)]
pub enum GramSpectrum {
    Full(EigenSystem),
    /// Eigenpairs of `k(X,X)/M`; each has multiplicity `d` in `K/M`.
    Kronecker { scalar: EigenSystem, d: usize },
}

impl GramSpectrum {
    pub fn max_value(&self) -> f64 {
        match self {
            GramSpectrum::Full(e) | GramSpectrum::Kronecker { scalar: e, .. } => e.max_value(),
        }
    }

    /// All eigenvalues of `K/M` with multiplicity, descending.
    pub fn values(&self) -> Vec<f64> {
        match self {
            GramSpectrum::Full(e) => e.values.to_vec(),
            GramSpectrum::Kronecker { scalar, d } => scalar
                .values
                .iter()
                .flat_map(|&v| std::iter::repeat(v).take(*d))
                .collect(),
        }
    }

    /// `Σ_j g(σ_j) u_j u_jᵀ v` over the spectrum of `K/M`.
    pub fn filter(&self, g: impl Fn(f64) -> f64, v: &Array1<f64>) -> Result<Array1<f64>> {
        match self {
            GramSpectrum::Full(e) => apply_spectral_filter(e, g, v),
            GramSpectrum::Kronecker { scalar, d } => {
                let m = scalar.len();
                if v.len() != m * d {
                    return Err(ScoreError::input(format!(
                        "spectral filter: vector length {} vs {}",
                        v.len(),
                        m * d
                    )));
                }
                let vm = v.view().into_shape((m, *d)).expect("length checked").to_owned();
                let mut proj = scalar.vectors.t().dot(&vm);
                for (mut row, &s) in proj.outer_iter_mut().zip(scalar.values.iter()) {
                    let w = g(s);
                    if !w.is_finite() {
                        return Err(ScoreError::numeric(format!(
                            "spectral filter value {w} at eigenvalue {s:.3e}"
                        )));
                    }
                    row *= w;
                }
                Ok(Array1::from(scalar.vectors.dot(&proj).into_raw_vec()))
            }
        }
    }
}

/// Reshapes a sample-major `Md` vector into `M x d`.
pub(crate) fn as_rows(v: &Array1<f64>, d: usize) -> Array2<f64> {
    v.view()
        .into_shape((v.len() / d, d))
        .expect("length is a multiple of d")
        .to_owned()
}
