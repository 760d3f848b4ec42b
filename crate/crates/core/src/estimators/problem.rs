use std::sync::OnceLock;

use ndarray::Array1;

use super::fitted::{FitDiagnostics, FittedScoreEstimator};
use super::regularizer::{
    default_landweber_step, nu_coefficients, resolve_threshold, Cutoff, RegularizerSpec,
};
use crate::error::{Result, ScoreError};
use crate::kernels::{
    as_rows, assemble_gram, h_vector, DenseView, GramMatrix, GramMode, GramSpectrum,
    MatrixKernelSpec, SampleMatrix,
};
use crate::linalg::{conjugate_gradient, power_iteration, Shifted, SpdFactor, RANK_TOL};

/// Defaults for the conjugate-gradient Tikhonov solve.
pub const CG_DEFAULT_TOL: f64 = 1e-4;
pub const CG_DEFAULT_MAX_ITER: usize = 40;

const POWER_ITERS: usize = 50;
const POWER_TOL: f64 = 1e-6;

/// Samples, kernel, Gram matrix and `h`, shared by every fit on the same data.
/// The spectrum and the top eigenvalue are computed lazily and cached.
#[derive(Debug)]
pub struct ScoreProblem {
    samples: SampleMatrix,
    spec: MatrixKernelSpec,
    gram: GramMatrix,
    h: Array1<f64>,
    spectrum: OnceLock<GramSpectrum>,
    sigma_max: OnceLock<f64>,
}

impl ScoreProblem {
    pub fn new(samples: SampleMatrix, spec: MatrixKernelSpec, mode: GramMode) -> Result<Self> {
        let gram = assemble_gram(&spec, &samples, mode)?;
        let h = h_vector(&spec, &samples);
        Ok(ScoreProblem {
            samples,
            spec,
            gram,
            h,
            spectrum: OnceLock::new(),
            sigma_max: OnceLock::new(),
        })
    }

    pub fn samples(&self) -> &SampleMatrix {
        &self.samples
    }

    pub fn spec(&self) -> &MatrixKernelSpec {
        &self.spec
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    pub fn h(&self) -> &Array1<f64> {
        &self.h
    }

    fn m(&self) -> f64 {
        self.samples.len() as f64
    }

    /// Eigendecomposition of `K/M` (dense Gram only).
    pub fn spectrum(&self) -> Result<&GramSpectrum> {
        if let Some(s) = self.spectrum.get() {
            return Ok(s);
        }
        let s = self.gram.spectrum()?;
        Ok(self.spectrum.get_or_init(|| s))
    }

    /// Largest eigenvalue of `K/M`: exact when the spectrum is cached,
    /// otherwise by power iteration.
    pub fn sigma_max(&self) -> Result<f64> {
        if let Some(&v) = self.sigma_max.get() {
            return Ok(v);
        }
        let v = match self.spectrum.get() {
            Some(s) => s.max_value(),
            None => power_iteration(&self.gram, POWER_ITERS, POWER_TOL)? / self.m(),
        };
        Ok(*self.sigma_max.get_or_init(|| v))
    }

    fn finish(&self, c: Array1<f64>, offset: f64, scheme: RegularizerSpec, diagnostics: FitDiagnostics) -> Result<FittedScoreEstimator> {
        if c.iter().any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(ScoreError::numeric(format!("{} fit produced non-finite coefficients", scheme.name())));
        }
        Ok(FittedScoreEstimator {
            spec: self.spec,
            samples: self.samples.clone(),
            basis: None,
            coeffs: as_rows(&c, self.samples.dim()),
            offset,
            scheme,
            diagnostics,
        })
    }

    /// Dispatch on the regularizer. Tikhonov uses the direct solve.
    pub fn fit(&self, scheme: &RegularizerSpec) -> Result<FittedScoreEstimator> {
        scheme.validate()?;
        match *scheme {
            RegularizerSpec::Tikhonov { lambda } => self.tikhonov(lambda),
            RegularizerSpec::TruncatedTikhonov { lambda } => self.truncated_tikhonov(lambda),
            RegularizerSpec::SpectralCutoff(c) => self.spectral_cutoff(c),
            RegularizerSpec::Landweber { step, iterations } => self.landweber(step, iterations),
            RegularizerSpec::NuMethod { nu, iterations } => self.nu_method(nu, iterations),
        }
    }

    /// Solves `(K + MλI)c = h/λ` directly; `a = -1/λ`.
    pub fn tikhonov(&self, lambda: f64) -> Result<FittedScoreEstimator> {
        let scheme = RegularizerSpec::Tikhonov { lambda };
        scheme.validate()?;
        let m = self.m();
        let rhs = &self.h / lambda;
        let c = match self.gram.dense_view() {
            Some(DenseView::Full(k)) => {
                let mut a = k.clone();
                a.diag_mut().map_inplace(|v| *v += m * lambda);
                SpdFactor::new(&a).map_err(|e| fit_error("Tikhonov", e))?.solve(&rhs)?
            }
            Some(DenseView::Scalar(g)) => {
                let mut a = g.clone();
                a.diag_mut().map_inplace(|v| *v += m * lambda);
                let rows = as_rows(&rhs, self.samples.dim());
                let sol = SpdFactor::new(&a)
                    .map_err(|e| fit_error("Tikhonov", e))?
                    .solve_columns(&rows)?;
                Array1::from_iter(sol.iter().copied())
            }
            None => {
                return Err(ScoreError::contract(
                    "direct Tikhonov needs a dense Gram matrix; use tikhonov_cg for implicit modes",
                ))
            }
        };
        self.finish(c, -1.0 / lambda, scheme, FitDiagnostics::default())
    }

    /// Same estimator as [`Self::tikhonov`] with `c` from conjugate gradient.
    /// Non-convergence is recorded as a warning, not an error.
    pub fn tikhonov_cg(&self, lambda: f64, tol: f64, max_iter: usize) -> Result<FittedScoreEstimator> {
        let scheme = RegularizerSpec::Tikhonov { lambda };
        scheme.validate()?;
        let op = Shifted { inner: &self.gram, shift: self.m() * lambda };
        let rhs = &self.h / lambda;
        let (c, report) = conjugate_gradient(&op, &rhs, tol, max_iter)?;
        let mut diagnostics = FitDiagnostics { cg: Some(report), warnings: vec![] };
        if !report.converged {
            diagnostics.warnings.push(format!(
                "CG stopped after {} iterations at relative residual {:.3e} (tol {tol:.1e})",
                report.iterations, report.residual
            ));
        }
        self.finish(c, -1.0 / lambda, scheme, diagnostics)
    }

    fn rank_floor(&self, spectrum: &GramSpectrum) -> Result<f64> {
        let top = spectrum.max_value();
        if !(top > 0.0) {
            return Err(ScoreError::Degenerate("Gram matrix has no positive eigenvalue".into()));
        }
        Ok(RANK_TOL * top)
    }

    /// `c = -Σ_{σ>0} u uᵀh / ((σ+λ)Mσ)`, `a = 0`.
    pub fn truncated_tikhonov(&self, lambda: f64) -> Result<FittedScoreEstimator> {
        let scheme = RegularizerSpec::TruncatedTikhonov { lambda };
        scheme.validate()?;
        let spectrum = self.spectrum()?;
        let floor = self.rank_floor(spectrum)?;
        let m = self.m();
        let c = -spectrum.filter(
            |s| if s > floor { 1.0 / ((s + lambda) * m * s) } else { 0.0 },
            &self.h,
        )?;
        self.finish(c, 0.0, scheme, FitDiagnostics::default())
    }

    /// `c = -Σ_{σ≥λ} u uᵀh / (Mσ²)`, `a = 0`.
    pub fn spectral_cutoff(&self, cutoff: Cutoff) -> Result<FittedScoreEstimator> {
        RegularizerSpec::SpectralCutoff(cutoff).validate()?;
        let spectrum = self.spectrum()?;
        let floor = self.rank_floor(spectrum)?;
        let mut diagnostics = FitDiagnostics::default();
        let threshold = match cutoff {
            Cutoff::Threshold(l) => l,
            Cutoff::Rank(j) => {
                let (t, used) = resolve_threshold(&spectrum.values(), j, floor);
                if used < j {
                    diagnostics
                        .warnings
                        .push(format!("cut-off rank {j} clamped to numerical rank {used}"));
                }
                t
            }
        };
        let m = self.m();
        let c = -spectrum.filter(
            |s| if s >= threshold && s > floor { 1.0 / (m * s * s) } else { 0.0 },
            &self.h,
        )?;
        self.finish(c, 0.0, RegularizerSpec::SpectralCutoff(cutoff), diagnostics)
    }

    /// Landweber iteration, `a = -tη`. Without an explicit step,
    /// `η = 0.9/σ̂_max`.
    pub fn landweber(&self, step: Option<f64>, iterations: usize) -> Result<FittedScoreEstimator> {
        RegularizerSpec::Landweber { step, iterations }.validate()?;
        let sigma_max = self.sigma_max()?;
        let eta = step.unwrap_or_else(|| default_landweber_step(sigma_max));
        if eta * sigma_max >= 1.0 {
            return Err(ScoreError::input(format!(
                "Landweber step {eta:.4e} violates η·σ_max(K/M) < 1 (σ_max ≈ {sigma_max:.4e}, need η < {:.4e})",
                1.0 / sigma_max
            )));
        }
        let m = self.m();
        let mut c = Array1::<f64>::zeros(self.gram.size());
        for k in 0..iterations.saturating_sub(1) {
            // c_{k+1} = c_k - (η/M) K c_k + k η² h / M, starting from c_1 = 0
            let kc = self.gram.matvec(c.view())?;
            c.scaled_add(-eta / m, &kc);
            c.scaled_add((k + 1) as f64 * eta * eta / m, &self.h);
        }
        let scheme = RegularizerSpec::Landweber { step: Some(eta), iterations };
        self.finish(c, -(iterations as f64) * eta, scheme, FitDiagnostics::default())
    }

    /// ν-method after `iterations` steps.
    pub fn nu_method(&self, nu: f64, iterations: usize) -> Result<FittedScoreEstimator> {
        Ok(self.nu_method_path(nu, &[iterations])?.pop().expect("one checkpoint"))
    }

    /// One ν-method run, snapshotting the estimator at each requested
    /// iteration count (returned in the order given).
    pub fn nu_method_path(&self, nu: f64, checkpoints: &[usize]) -> Result<Vec<FittedScoreEstimator>> {
        for &t in checkpoints {
            RegularizerSpec::NuMethod { nu, iterations: t }.validate()?;
        }
        let last = checkpoints.iter().copied().max().unwrap_or(0);
        let m = self.m();
        let n = self.gram.size();
        let mut snapshots: Vec<Option<(Array1<f64>, f64)>> = vec![None; last + 1];
        // (c, a) at t-2 and t-1
        let mut c_prev = Array1::<f64>::zeros(n);
        let mut a_prev = 0.0;
        let mut c_cur = Array1::<f64>::zeros(n);
        let mut a_cur = -nu_coefficients(nu, 1).1;
        if last >= 1 {
            snapshots[1] = Some((c_cur.clone(), a_cur));
        }
        for t in 2..=last {
            let (u, w) = nu_coefficients(nu, t);
            let a_next = (1.0 + u) * a_cur - u * a_prev - w;
            let mut inner = self.gram.matvec(c_cur.view())?;
            inner.scaled_add(a_cur, &self.h);
            let mut c_next = &c_cur * (1.0 + u);
            c_next.scaled_add(-w / m, &inner);
            c_next.scaled_add(-u, &c_prev);
            if !a_next.is_finite() || c_next.iter().any(|v| !v.is_finite()) {
                return Err(ScoreError::numeric(format!("nu-method state became non-finite at t={t}")));
            }
            c_prev = std::mem::replace(&mut c_cur, c_next);
            a_prev = std::mem::replace(&mut a_cur, a_next);
            if checkpoints.contains(&t) {
                snapshots[t] = Some((c_cur.clone(), a_cur));
            }
        }
        checkpoints
            .iter()
            .map(|&t| {
                let (c, a) = snapshots[t].clone().expect("checkpoint recorded");
                self.finish(c, a, RegularizerSpec::NuMethod { nu, iterations: t }, FitDiagnostics::default())
            })
            .collect()
    }
}

fn fit_error(scheme: &str, e: ScoreError) -> ScoreError {
    match e {
        ScoreError::Solver(msg) => ScoreError::Solver(format!("{scheme} fit failed: {msg}")),
        other => other,
    }
}
