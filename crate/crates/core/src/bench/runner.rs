use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Bandwidth, EstimatorConfig, ExperimentConfig, SchemeConfig};
use super::results::ResultRow;
use crate::error::{Result, ScoreError};
use crate::estimators::{fit_nystrom, landweber_iterations, Cutoff, FittedScoreEstimator, RegularizerSpec, ScoreProblem};
use crate::kernels::{GramMode, KernelKind, MatrixKernelSpec, ScalarRadialKernel, DENSE_BUDGET_BYTES};
use crate::oracles::{median_bandwidth, normalized_error_at, MixtureDistribution, OracleScore, ScoreModel, ZeroScore};

/// Execution knobs that do not change results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for the sweep; `None` uses rayon's default.
    pub threads: Option<usize>,
    /// Directory that relative paths in the config resolve against.
    pub base_dir: PathBuf,
}

/// splitmix64 over the parts, so every (seed, d, M, purpose) gets an
/// independent stream.
pub(crate) fn derive_seed(parts: &[u64]) -> u64 {
    let mut z: u64 = 0x5EED_0F5C_0BE5_u64;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

const PURPOSE_TRAIN: u64 = 1;
const PURPOSE_EVAL: u64 = 2;
const PURPOSE_SUBSET: u64 = 3;

struct Cell<'a> {
    estimator: &'a EstimatorConfig,
    dist: &'a MixtureDistribution,
    d: usize,
    m: usize,
    seed: u64,
    base_seed: u64,
    eval_size: usize,
}

/// Outcome of one hyperparameter point.
struct PointResult {
    value: f64,
    error: Result<f64>,
    warning: Option<String>,
    fit_ms: f64,
    predict_ms: f64,
}

/// Every (estimator, d, M, hyperparameter, seed) combination, one row each,
/// ordered by estimator, d, M, hyperparameter and seed as in the config.
/// Failed fits become rows with a NaN error and a reason.
pub fn run_grid_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let dists = config
        .dims
        .iter()
        .map(|&d| config.distribution.build(d, &opts.base_dir))
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::new();
    for est in &config.estimators {
        for (di, &d) in config.dims.iter().enumerate() {
            for &m in &config.sample_sizes {
                for &seed in &config.seeds {
                    cells.push(Cell {
                        estimator: est,
                        dist: &dists[di],
                        d,
                        m,
                        seed,
                        base_seed: config.base_seed,
                        eval_size: config.eval_size,
                    });
                }
            }
        }
    }
    let run = || cells.par_iter().map(run_cell_isolated).collect::<Vec<_>>();
    let results = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ScoreError::input(format!("cannot start {n} threads: {e}")))?
            .install(run),
        None => run(),
    };

    // seeds innermost: regroup each (estimator, d, M) block by hyperparameter
    let mut rows = Vec::new();
    let per_block = config.seeds.len();
    for (block, chunk) in cells.chunks(per_block).zip(results.chunks(per_block)) {
        let cell = &block[0];
        let (param, grid) = cell.estimator.scheme.grid();
        for (hi, &value) in grid.iter().enumerate() {
            for (c, res) in block.iter().zip(chunk) {
                let p = &res[hi];
                debug_assert_eq!(p.value, value);
                let (error, reason) = match &p.error {
                    Ok(e) => (*e, p.warning.clone().map(|w| format!("warning: {w}")).unwrap_or_default()),
                    Err(e) => (f64::NAN, e.to_string()),
                };
                rows.push(ResultRow {
                    estimator: cell.estimator.label(),
                    scheme: cell.estimator.scheme.name().to_string(),
                    kernel: cell.estimator.kernel_name().to_string(),
                    d: cell.d,
                    m: cell.m,
                    param: param.to_string(),
                    value,
                    seed: c.seed,
                    error,
                    reason,
                    fit_ms: p.fit_ms,
                    predict_ms: p.predict_ms,
                });
            }
        }
    }
    Ok(rows)
}

fn run_cell_isolated(cell: &Cell<'_>) -> Vec<PointResult> {
    let (_, grid) = cell.estimator.scheme.grid();
    match catch_unwind(AssertUnwindSafe(|| run_cell(cell))) {
        Ok(Ok(points)) => points,
        Ok(Err(e)) => fail_all(&grid, &e.to_string()),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| panic.downcast_ref::<&str>().copied())
                .unwrap_or("unknown panic");
            fail_all(&grid, &format!("internal error: {msg}"))
        }
    }
}

fn fail_all(grid: &[f64], reason: &str) -> Vec<PointResult> {
    grid.iter()
        .map(|&value| PointResult {
            value,
            error: Err(ScoreError::Numeric(reason.to_string())),
            warning: None,
            fit_ms: 0.0,
            predict_ms: 0.0,
        })
        .collect()
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn evaluate(model: &dyn ScoreModel, dist: &MixtureDistribution, eval: &Array2<f64>) -> (Result<f64>, f64) {
    let t = Instant::now();
    let e = normalized_error_at(model, dist, eval.view());
    (e, ms(t))
}

fn gram_mode(est: &EstimatorConfig, m: usize, d: usize) -> GramMode {
    est.gram_mode.map_or_else(|| GramMode::for_iterative(est.kernel, m, d), Into::into)
}

fn dense_fits(est: &EstimatorConfig, m: usize, d: usize) -> bool {
    if est.kernel == KernelKind::Diagonal {
        return true;
    }
    let n = m * d;
    n.saturating_mul(n).saturating_mul(8) <= DENSE_BUDGET_BYTES
}

fn run_cell(cell: &Cell<'_>) -> Result<Vec<PointResult>> {
    let est = cell.estimator;
    let train = cell
        .dist
        .sample(cell.m, derive_seed(&[cell.base_seed, cell.seed, cell.d as u64, cell.m as u64, PURPOSE_TRAIN]))?;
    let eval = cell
        .dist
        .sample(cell.eval_size, derive_seed(&[cell.base_seed, cell.seed, cell.d as u64, PURPOSE_EVAL]))?
        .into_array();
    let (_, grid) = est.scheme.grid();

    match &est.scheme {
        SchemeConfig::Oracle | SchemeConfig::Zero => {
            let model: Box<dyn ScoreModel> = match est.scheme {
                SchemeConfig::Oracle => Box::new(OracleScore(cell.dist.clone())),
                _ => Box::new(ZeroScore(cell.d)),
            };
            let (error, predict_ms) = evaluate(model.as_ref(), cell.dist, &eval);
            return Ok(vec![PointResult { value: grid[0], error, warning: None, fit_ms: 0.0, predict_ms }]);
        }
        _ => {}
    }

    let setup = Instant::now();
    let bandwidth = match est.bandwidth {
        Bandwidth::Median => median_bandwidth(&train)?,
        Bandwidth::Fixed(b) => b,
    };
    let spec = MatrixKernelSpec::new(est.kernel, ScalarRadialKernel::new(est.family, bandwidth)?);

    // schemes that fit each grid point separately
    let single = |fit: &dyn Fn(f64) -> Result<FittedScoreEstimator>, setup_ms: f64| -> Vec<PointResult> {
        grid.iter()
            .map(|&value| {
                let t = Instant::now();
                let fitted = fit(value);
                let fit_ms = setup_ms + ms(t);
                match fitted {
                    Ok(f) => {
                        let warning = (!f.diagnostics().warnings.is_empty()).then(|| f.diagnostics().warnings.join("; "));
                        let (error, predict_ms) = evaluate(&f, cell.dist, &eval);
                        PointResult { value, error, warning, fit_ms, predict_ms }
                    }
                    Err(e) => PointResult { value, error: Err(e), warning: None, fit_ms, predict_ms: 0.0 },
                }
            })
            .collect()
    };

    let points = match &est.scheme {
        SchemeConfig::Tikhonov { tol, max_iter, .. } => {
            let direct = dense_fits(est, cell.m, cell.d) && est.gram_mode.map_or(true, |g| GramMode::from(g) == GramMode::Dense);
            let mode = if direct { GramMode::Dense } else { gram_mode(est, cell.m, cell.d) };
            let problem = ScoreProblem::new(train, spec, mode)?;
            let setup_ms = ms(setup);
            let (tol, max_iter) = (*tol, *max_iter);
            single(
                &|lambda| {
                    if direct {
                        return problem.tikhonov(lambda);
                    }
                    // no direct solve at this size: CG to a tight tolerance
                    let f = problem.tikhonov_cg(lambda, tol, max_iter)?;
                    match f.diagnostics().cg {
                        Some(r) if !r.converged => Err(ScoreError::Solver(format!(
                            "CG did not reach tol {tol:.1e} in {max_iter} iterations (residual {:.3e})",
                            r.residual
                        ))),
                        _ => Ok(f),
                    }
                },
                setup_ms,
            )
        }
        SchemeConfig::TikhonovCg { tol, max_iter, .. } => {
            let problem = ScoreProblem::new(train, spec, gram_mode(est, cell.m, cell.d))?;
            let setup_ms = ms(setup);
            single(&|lambda| problem.tikhonov_cg(lambda, *tol, *max_iter), setup_ms)
        }
        SchemeConfig::TruncatedTikhonov { .. } => {
            let problem = ScoreProblem::new(train, spec, GramMode::Dense)?;
            problem.spectrum()?;
            let setup_ms = ms(setup);
            single(&|lambda| problem.truncated_tikhonov(lambda), setup_ms)
        }
        SchemeConfig::SpectralCutoff { .. } => {
            let problem = ScoreProblem::new(train, spec, GramMode::Dense)?;
            problem.spectrum()?;
            let setup_ms = ms(setup);
            let total = (cell.m * cell.d) as f64;
            single(
                &|fraction| {
                    let rank = ((fraction * total).round() as usize).max(1);
                    problem.spectral_cutoff(Cutoff::Rank(rank))
                },
                setup_ms,
            )
        }
        SchemeConfig::Landweber { step, .. } => {
            let problem = ScoreProblem::new(train, spec, gram_mode(est, cell.m, cell.d))?;
            problem.sigma_max()?;
            let setup_ms = ms(setup);
            single(&|lambda| problem.landweber(*step, landweber_iterations(lambda)), setup_ms)
        }
        SchemeConfig::Nystrom { subset_fraction, .. } => {
            let n = ((subset_fraction * cell.m as f64).round() as usize).clamp(1, cell.m);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[
                cell.base_seed,
                cell.seed,
                cell.d as u64,
                cell.m as u64,
                PURPOSE_SUBSET,
            ]));
            let mut subset = rand::seq::index::sample(&mut rng, cell.m, n).into_vec();
            subset.sort_unstable();
            let setup_ms = ms(setup);
            single(
                &|lambda| fit_nystrom(&train, &subset, &spec, &RegularizerSpec::TruncatedTikhonov { lambda }),
                setup_ms,
            )
        }
        SchemeConfig::NuMethod { iterations, nu } => {
            let problem = ScoreProblem::new(train, spec, gram_mode(est, cell.m, cell.d))?;
            let path = problem.nu_method_path(*nu, iterations);
            // one run covers every checkpoint; each row reports the whole run
            let fit_ms = ms(setup);
            match path {
                Ok(fits) => fits
                    .iter()
                    .zip(iterations)
                    .map(|(f, &it)| {
                        let (error, predict_ms) = evaluate(f, cell.dist, &eval);
                        PointResult { value: it as f64, error, warning: None, fit_ms, predict_ms }
                    })
                    .collect(),
                Err(e) => fail_all(&grid, &e.to_string()),
            }
        }
        SchemeConfig::Oracle | SchemeConfig::Zero => unreachable!("handled above"),
    };
    Ok(points)
}

/// Resolves a config path's directory for relative lookups.
pub fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}
