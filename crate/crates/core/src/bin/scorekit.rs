use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scorekit::bench::{
    config_dir, emit_plot, run_convergence_experiment, run_grid_experiment, sidecar_path, write_best_csv,
    write_results, write_slopes_csv, ExperimentConfig, PlotAxis, PlotSpec, RunOptions,
};
use scorekit::estimators::{codec, fit_nystrom, random_subset, Cutoff, RegularizerSpec, ScoreProblem};
use scorekit::kernels::{GramMode, KernelFamily, KernelKind, MatrixKernelSpec, ScalarRadialKernel};
use scorekit::oracles::{median_bandwidth, read_matrix_csv, read_samples_csv, write_matrix_csv};
use scorekit::{Result, ScoreError};

#[derive(Parser)]
#[command(name = "scorekit", version, about = "Kernel score estimation: fit, predict and benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an estimator to a samples CSV and save it.
    Fit(FitArgs),
    /// Evaluate a saved estimator at the rows of a queries CSV.
    Predict(PredictArgs),
    /// Run a hyperparameter grid sweep.
    GridExp(ExpArgs),
    /// Run a sweep over sample sizes and fit convergence slopes.
    ConvExp(ExpArgs),
    /// Render a results CSV as an SVG chart.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Tikhonov,
    TikhonovCg,
    TruncatedTikhonov,
    SpectralCutoff,
    Landweber,
    NuMethod,
    Nystrom,
}

#[derive(Args)]
struct FitArgs {
    /// Samples CSV with header x1,…,xd.
    #[arg(long)]
    samples: PathBuf,
    /// Where to write the serialized estimator.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "tikhonov")]
    scheme: SchemeArg,
    /// diagonal or curl_free.
    #[arg(long, default_value = "curl_free")]
    kernel: KernelKind,
    /// imq or gaussian.
    #[arg(long, default_value = "imq")]
    family: KernelFamily,
    /// Bandwidth, or "median" for the median heuristic.
    #[arg(long, default_value = "median")]
    bandwidth: String,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    /// Iteration count (Landweber, ν-method); defaults from λ.
    #[arg(long)]
    iterations: Option<usize>,
    /// Landweber step; default 0.9/σ̂_max.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    /// Spectral cut-off by rank instead of by λ.
    #[arg(long)]
    rank: Option<usize>,
    /// Nyström subset size.
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long, default_value_t = scorekit::estimators::CG_DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = scorekit::estimators::CG_DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Seed for the Nyström subset.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PredictArgs {
    /// Serialized estimator from `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Queries CSV, one point per row.
    #[arg(long)]
    queries: PathBuf,
    /// Scores CSV (header s1,…,sd).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExpArgs {
    /// Experiment TOML.
    #[arg(long)]
    config: PathBuf,
    /// Results CSV; sidecars are written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's base_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the sweep.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    D,
    M,
}

#[derive(Args)]
struct PlotArgs {
    /// Results CSV from grid-exp or conv-exp.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "d")]
    x: AxisArg,
    #[arg(long)]
    log_x: bool,
    /// Linear error axis instead of log.
    #[arg(long)]
    linear_y: bool,
    #[arg(long, default_value = "")]
    title: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::GridExp(a) => grid_exp(a),
        Command::ConvExp(a) => conv_exp(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn fit(a: FitArgs) -> Result<()> {
    let samples = read_samples_csv(&a.samples)?;
    let bandwidth = match a.bandwidth.as_str() {
        "median" => median_bandwidth(&samples)?,
        s => s.parse().map_err(|_| ScoreError::Input(format!("bad bandwidth {s:?}")))?,
    };
    let spec = MatrixKernelSpec::new(a.kernel, ScalarRadialKernel::new(a.family, bandwidth)?);
    let iterative = GramMode::for_iterative(a.kernel, samples.len(), samples.dim());
    let est = match a.scheme {
        SchemeArg::Tikhonov => ScoreProblem::new(samples, spec, GramMode::Dense)?.tikhonov(a.lambda)?,
        SchemeArg::TikhonovCg => ScoreProblem::new(samples, spec, iterative)?.tikhonov_cg(a.lambda, a.tol, a.max_iter)?,
        SchemeArg::TruncatedTikhonov => ScoreProblem::new(samples, spec, GramMode::Dense)?.truncated_tikhonov(a.lambda)?,
        SchemeArg::SpectralCutoff => {
            let cutoff = a.rank.map_or(Cutoff::Threshold(a.lambda), Cutoff::Rank);
            ScoreProblem::new(samples, spec, GramMode::Dense)?.spectral_cutoff(cutoff)?
        }
        SchemeArg::Landweber => {
            let t = a.iterations.unwrap_or_else(|| scorekit::estimators::landweber_iterations(a.lambda));
            ScoreProblem::new(samples, spec, iterative)?.landweber(a.step, t)?
        }
        SchemeArg::NuMethod => {
            let t = a.iterations.unwrap_or_else(|| scorekit::estimators::nu_iterations(a.lambda));
            ScoreProblem::new(samples, spec, iterative)?.nu_method(a.nu, t)?
        }
        SchemeArg::Nystrom => {
            let n = a.subset.ok_or_else(|| ScoreError::Input("nystrom needs --subset".into()))?;
            if n == 0 || n > samples.len() {
                return Err(ScoreError::Input(format!("--subset must be in 1..={}", samples.len())));
            }
            let idx = random_subset(samples.len(), n, a.seed)?;
            fit_nystrom(&samples, &idx, &spec, &RegularizerSpec::TruncatedTikhonov { lambda: a.lambda })?
        }
    };
    for w in &est.diagnostics().warnings {
        eprintln!("warning: {w}");
    }
    codec::save(&est, &a.out)
}

fn predict(a: PredictArgs) -> Result<()> {
    let est = codec::load(&a.model)?;
    let queries = read_matrix_csv(std::fs::File::open(&a.queries)?)?;
    let scores = est.predict(queries.view())?;
    write_matrix_csv(std::fs::File::create(&a.out)?, scores.view(), "s")
}

fn load_config(a: &ExpArgs) -> Result<(ExperimentConfig, RunOptions)> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.base_seed = s;
    }
    if a.threads == Some(0) {
        return Err(ScoreError::Input("--threads must be at least 1".into()));
    }
    Ok((cfg, RunOptions { threads: a.threads, base_dir: config_dir(&a.config) }))
}

fn report_failures(rows: &[scorekit::bench::ResultRow]) {
    let failed = rows.iter().filter(|r| r.error.is_nan()).count();
    if failed > 0 {
        eprintln!("{failed} of {} grid points failed (see the reason column)", rows.len());
    }
}

fn grid_exp(a: ExpArgs) -> Result<()> {
    let (cfg, opts) = load_config(&a)?;
    let rows = run_grid_experiment(&cfg, &opts)?;
    write_results(&a.out, &rows)?;
    let best = scorekit::bench::best_hyperparameters(&rows);
    write_best_csv(std::fs::File::create(sidecar_path(&a.out, "best.csv"))?, &best)?;
    report_failures(&rows);
    for b in &best {
        println!("{:<28} d={:<4} M={:<6} best {}={:<10} median error {:.6e}", b.estimator, b.d, b.m, b.param, b.value, b.median_error);
    }
    Ok(())
}

fn conv_exp(a: ExpArgs) -> Result<()> {
    let (cfg, opts) = load_config(&a)?;
    let report = run_convergence_experiment(&cfg, &opts)?;
    write_results(&a.out, &report.rows)?;
    write_best_csv(std::fs::File::create(sidecar_path(&a.out, "best.csv"))?, &report.best)?;
    write_slopes_csv(std::fs::File::create(sidecar_path(&a.out, "slopes.csv"))?, &report.slopes)?;
    report_failures(&report.rows);
    for s in &report.slopes {
        println!(
            "{:<28} d={:<4} slope {:>8.4} ({}) strictly decreasing: {}",
            s.estimator,
            s.d,
            s.slope,
            s.status.name(),
            s.strictly_decreasing
        );
    }
    Ok(())
}

fn plot(a: PlotArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.input)?;
    let spec = PlotSpec {
        x: match a.x {
            AxisArg::D => PlotAxis::Dimension,
            AxisArg::M => PlotAxis::SampleSize,
        },
        log_x: a.log_x,
        log_y: !a.linear_y,
        title: a.title,
        ..PlotSpec::default()
    };
    let svg = emit_plot(&text, &spec)?;
    write_file(&a.out, svg.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)?;
    Ok(())
}
