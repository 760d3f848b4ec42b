//! Scalar radial kernels, the diagonal and curl-free matrix-valued kernels
//! built on them, Gram matrices and the divergence field `ζ̂`.

mod gram;
mod matrix;
mod samples;
mod scalar;

pub use gram::{assemble_gram, gram_matvec, h_vector, GramMatrix, GramMode, GramSpectrum, DENSE_BUDGET_BYTES};
pub use matrix::{curlfree_matvec, eval_matrix_kernel, zeta, KernelKind, MatrixKernelSpec};
pub use samples::SampleMatrix;
pub use scalar::{scalar_derivs, KernelFamily, RadialDerivs, ScalarRadialKernel};

pub(crate) use gram::{as_rows, cross_gram, DenseView};
pub(crate) use matrix::{kernel_apply, pairwise_sq_dists, zeta_batch};
