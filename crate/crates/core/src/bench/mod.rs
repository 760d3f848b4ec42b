//! Seeded experiment sweeps: estimator × kernel × hyperparameter grids over
//! synthetic distributions, with CSV results and SVG plots.
//!
//! Results CSVs never contain timings, so a rerun of the same config writes
//! identical bytes; wall-clock times go to a `<out>.timings.csv` sidecar.

mod config;
mod plot;
mod results;
mod runner;

pub use config::{
    default_cutoff_fractions, default_lambdas, default_nu_iterations, Bandwidth, DistributionConfig,
    EstimatorConfig, ExperimentConfig, GramModeConfig, SchemeConfig, SCHEMA_VERSION,
};
pub use plot::{emit_plot, render_svg, series_from_results, PlotAxis, PlotSpec, Series};
pub use results::{
    best_hyperparameters, convergence_slopes, least_squares_slope, read_results_csv, write_best_csv,
    write_results_csv, write_slopes_csv, write_timings_csv, BestRow, ResultRow, SlopeFit, SlopeStatus,
    BEST_COLUMNS, RESULT_COLUMNS, SLOPE_COLUMNS, TIMING_COLUMNS,
};
pub use runner::{config_dir, run_grid_experiment, RunOptions};

use std::path::{Path, PathBuf};

use crate::error::{Result, ScoreError};

/// Rows plus best-per-M summaries and a slope per (estimator, d).
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub rows: Vec<ResultRow>,
    pub best: Vec<BestRow>,
    pub slopes: Vec<SlopeFit>,
}

/// Grid sweep over several sample sizes followed by a log-log fit of the
/// best median error against M. Needs ≥ 3 sample sizes spanning a decade.
pub fn run_convergence_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<ConvergenceReport> {
    let mut sizes = config.sample_sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 || (sizes[sizes.len() - 1] as f64) < 10.0 * sizes[0] as f64 {
        return Err(ScoreError::input(
            "convergence experiment needs at least 3 sample sizes spanning a factor of 10",
        ));
    }
    let rows = run_grid_experiment(config, opts)?;
    let best = best_hyperparameters(&rows);
    let slopes = convergence_slopes(&best);
    Ok(ConvergenceReport { rows, best, slopes })
}

/// `<out>.<suffix>` next to the main output.
pub fn sidecar_path(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".{suffix}"));
    out.with_file_name(name)
}

/// Writes the results CSV and its timings sidecar.
pub fn write_results(out: &Path, rows: &[ResultRow]) -> Result<()> {
    write_results_csv(std::fs::File::create(out)?, rows)?;
    write_timings_csv(std::fs::File::create(sidecar_path(out, "timings.csv"))?, rows)?;
    Ok(())
}
