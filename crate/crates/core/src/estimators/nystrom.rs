use ndarray::{s, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fitted::{FitDiagnostics, FittedScoreEstimator};
use super::regularizer::{default_landweber_step, resolve_threshold, Cutoff, RegularizerSpec};
use crate::error::{Result, ScoreError};
use crate::kernels::{cross_gram, h_vector, KernelKind, MatrixKernelSpec, SampleMatrix};
use crate::linalg::{sym_eig, SpdFactor, RANK_TOL};

/// Relative jitter added to `K_ZZ` when the first solve fails.
const JITTER: f64 = 1e-8;
/// Bytes of `K_ZX` materialized at once while accumulating `K_ZX K_XZ`.
const CHUNK_BYTES: usize = 64 << 20;

/// `size` distinct sample indices drawn uniformly from `0..m`, sorted.
pub fn random_subset(m: usize, size: usize, seed: u64) -> Result<Vec<usize>> {
    if size == 0 || size > m {
        return Err(ScoreError::input(format!("subset size must be in 1..={m}, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, m, size).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Nyström estimator restricted to the span of `𝒦(·, z)` for `z` in the
/// subset. Predictions are `-K_xZ c` with no `ζ̂` term.
///
/// With `L = R K_ZX K_XZ R / M` and `R = K_ZZ^{-1/2}` the coefficients are
/// `c = -R g(L) R h_Z`. Truncated Tikhonov uses the equivalent closed form
/// `c = -(K_ZX K_XZ / M + λ K_ZZ)^{-1} h_Z`, which matches the full
/// truncated Tikhonov estimator at the same `λ` when the subset is every
/// sample. Tikhonov applies `1/(σ + λ)` to the whole spectrum of `L`, which
/// equals the closed form whenever `K_ZZ` is invertible.
pub fn fit_nystrom(
    samples: &SampleMatrix,
    subset: &[usize],
    spec: &MatrixKernelSpec,
    scheme: &RegularizerSpec,
) -> Result<FittedScoreEstimator> {
    scheme.validate()?;
    let d = samples.dim();
    let m = samples.len() as f64;
    let z = samples.select(subset)?;
    let system = NystromSystem::build(spec, samples, &z);
    let h = h_vector(spec, samples);
    let hz = subset_rhs(&h, subset, d, spec.kind);
    let mut diagnostics = FitDiagnostics::default();

    let c = match *scheme {
        RegularizerSpec::TruncatedTikhonov { lambda } => {
            let solve = |kzz: &Array2<f64>| {
                let a = &system.cross / m + &(kzz * lambda);
                SpdFactor::new(&a)?.solve_columns(&hz)
            };
            match solve(&system.kzz) {
                Ok(c) => c,
                Err(ScoreError::Solver(first)) => {
                    let n = system.kzz.nrows();
                    let delta = JITTER * system.kzz.diag().sum() / n as f64;
                    diagnostics.warnings.push(format!(
                        "K_ZZ solve failed ({first}); retried with jitter {delta:.3e}"
                    ));
                    let jittered = &system.kzz + &(Array2::<f64>::eye(n) * delta);
                    solve(&jittered).map_err(|e| match e {
                        ScoreError::Solver(msg) => {
                            ScoreError::Solver(format!("Nyström fit failed after jitter: {msg}"))
                        }
                        other => other,
                    })?
                }
                Err(e) => return Err(e),
            }
        }
        _ => general_form(&system, &hz, m, scheme, spec.kind, d, &mut diagnostics)?,
    };
    let c = -c;
    if c.iter().any(|v| !v.is_finite()) {
        return Err(ScoreError::numeric("Nyström fit produced non-finite coefficients"));
    }
    // back to one row per subset point
    let coeffs = match spec.kind {
        KernelKind::Diagonal => c,
        KernelKind::CurlFree => c
            .into_shape((subset.len(), d))
            .expect("Nd coefficients"),
    };
    Ok(FittedScoreEstimator {
        spec: *spec,
        samples: samples.clone(),
        basis: Some(subset.to_vec()),
        coeffs,
        offset: 0.0,
        scheme: *scheme,
        diagnostics,
    })
}

/// `K_ZZ` and `K_ZX K_XZ`, as scalar `N x N` factors for diagonal kernels
/// (the full matrices are these `⊗ I_d`) or `Nd x Nd` for curl-free ones.
struct NystromSystem {
    kzz: Array2<f64>,
    cross: Array2<f64>,
}

impl NystromSystem {
    fn build(spec: &MatrixKernelSpec, samples: &SampleMatrix, z: &SampleMatrix) -> Self {
        let kzz = cross_gram(spec, z.view(), z.view());
        let n = kzz.nrows();
        let x = samples.view();
        let block = (n / z.len()).max(1);
        let chunk = (CHUNK_BYTES / (8 * n * block)).max(1);
        let mut cross = Array2::<f64>::zeros((n, n));
        let mut start = 0;
        while start < x.nrows() {
            let end = (start + chunk).min(x.nrows());
            let kzx = cross_gram(spec, z.view(), x.slice(s![start..end, ..]));
            ndarray::linalg::general_mat_mul(1.0, &kzx, &kzx.t(), 1.0, &mut cross);
            start = end;
        }
        // exact symmetry for the eigensolver / Cholesky
        let sym = (&cross + &cross.t()) * 0.5;
        NystromSystem { kzz, cross: sym }
    }
}

/// Rows of `h` at the subset: `N x d` for diagonal kernels (one right-hand
/// side per coordinate), `Nd x 1` for curl-free ones.
fn subset_rhs(h: &Array1<f64>, subset: &[usize], d: usize, kind: KernelKind) -> Array2<f64> {
    let rows = h.view().into_shape((h.len() / d, d)).expect("Md vector");
    let hz = rows.select(Axis(0), subset);
    match kind {
        KernelKind::Diagonal => hz,
        KernelKind::CurlFree => {
            let n = hz.len();
            hz.into_shape((n, 1)).expect("contiguous")
        }
    }
}

/// `R g(L) R h_Z` through the eigendecompositions of `K_ZZ` and `L`.
fn general_form(
    system: &NystromSystem,
    hz: &Array2<f64>,
    m: f64,
    scheme: &RegularizerSpec,
    kind: KernelKind,
    d: usize,
    diagnostics: &mut FitDiagnostics,
) -> Result<Array2<f64>> {
    let kzz = sym_eig(&system.kzz)?;
    let top = kzz.max_value();
    if !(top > 0.0) {
        return Err(ScoreError::Degenerate("K_ZZ has no positive eigenvalue".into()));
    }
    // pseudo-inverse square root, clipping the numerical null space
    let inv_sqrt = kzz
        .values
        .mapv(|v| if v > RANK_TOL * top { v.powf(-0.5) } else { 0.0 });
    let r = (&kzz.vectors * &inv_sqrt).dot(&kzz.vectors.t());
    let l = r.dot(&system.cross).dot(&r) / m;
    let l = (&l + &l.t()) * 0.5;
    let eig = sym_eig(&l)?;
    let l_top = eig.max_value();
    let floor = RANK_TOL * l_top.max(0.0);
    let multiplicity = if kind == KernelKind::Diagonal { d } else { 1 };

    let resolved = match *scheme {
        RegularizerSpec::SpectralCutoff(Cutoff::Rank(j)) => {
            let values: Vec<f64> = eig
                .values
                .iter()
                .flat_map(|&v| std::iter::repeat(v).take(multiplicity))
                .collect();
            let (t, used) = resolve_threshold(&values, j, floor);
            if used < j {
                diagnostics
                    .warnings
                    .push(format!("cut-off rank {j} clamped to numerical rank {used}"));
            }
            RegularizerSpec::SpectralCutoff(Cutoff::Threshold(t))
        }
        RegularizerSpec::Landweber { step: None, iterations } => {
            if !(l_top > 0.0) {
                return Err(ScoreError::Degenerate("Nyström operator is zero".into()));
            }
            RegularizerSpec::Landweber { step: Some(default_landweber_step(l_top)), iterations }
        }
        other => other,
    };
    let g = eig.values.mapv(|s| resolved.filter_value(s, floor));
    if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
        return Err(ScoreError::numeric(format!("Nyström filter value {bad}")));
    }
    let rh = r.dot(hz);
    let proj = eig.vectors.t().dot(&rh);
    let scaled = &proj * &g.insert_axis(Axis(1));
    Ok(r.dot(&eig.vectors.dot(&scaled)))
}
