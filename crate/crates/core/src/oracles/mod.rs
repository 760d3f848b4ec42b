//! Synthetic distributions with analytic scores, error metrics and the
//! median bandwidth heuristic.

mod csv_io;
mod stein;

pub use csv_io::{read_matrix_csv, read_samples_csv, write_matrix_csv, write_samples_csv};
pub use stein::stein_refit_score;

use std::collections::HashSet;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, ScoreError};
use crate::estimators::FittedScoreEstimator;
use crate::kernels::SampleMatrix;

/// Gaussian mixture with shared isotropic covariance `s²I`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDistribution {
    means: Array2<f64>,
    weights: Array1<f64>,
    scale: f64,
}

impl MixtureDistribution {
    /// One mean per row. Weights must be positive and sum to one.
    pub fn new(means: Array2<f64>, weights: Array1<f64>, scale: f64) -> Result<Self> {
        let (k, d) = means.dim();
        if k == 0 || d == 0 {
            return Err(ScoreError::input("mixture needs at least one component of dimension ≥ 1"));
        }
        if weights.len() != k {
            return Err(ScoreError::input(format!("{} weights for {k} components", weights.len())));
        }
        if weights.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(ScoreError::input("mixture weights must be positive"));
        }
        if (weights.sum() - 1.0).abs() > 1e-12 {
            return Err(ScoreError::input(format!("mixture weights sum to {}, not 1", weights.sum())));
        }
        if !(scale.is_finite() && scale > 0.0) || means.iter().any(|v| !v.is_finite()) {
            return Err(ScoreError::input("mixture scale and means must be finite, scale positive"));
        }
        Ok(MixtureDistribution { means, weights, scale })
    }

    /// `N(0, I_d)`.
    pub fn standard_normal(d: usize) -> Result<Self> {
        Self::new(Array2::zeros((1, d)), Array1::ones(1), 1.0)
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn means(&self) -> ArrayView2<'_, f64> {
        self.means.view()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `log w_i - ‖x - μ_i‖²/(2s²)` per component (shared constants dropped).
    fn log_terms(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let s2 = self.scale * self.scale;
        Array1::from_iter(self.means.outer_iter().zip(self.weights.iter()).map(|(mu, &w)| {
            let r = &x - &mu;
            w.ln() - r.dot(&r) / (2.0 * s2)
        }))
    }

    /// Normalized log density.
    pub fn log_density(&self, x: ArrayView1<'_, f64>) -> f64 {
        let t = self.log_terms(x);
        let top = t.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = top + t.mapv(|v| (v - top).exp()).sum().ln();
        let d = self.dim() as f64;
        lse - 0.5 * d * (2.0 * std::f64::consts::PI * self.scale * self.scale).ln()
    }

    /// `∇log p(x) = Σ_i r_i(x)(μ_i - x)/s²` with responsibilities from
    /// log-sum-exp, so it stays finite far from every component.
    pub fn true_score(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let t = self.log_terms(x);
        let top = t.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let r = t.mapv(|v| (v - top).exp());
        let r = &r / r.sum();
        let mut out = Array1::zeros(self.dim());
        for (mu, &ri) in self.means.outer_iter().zip(r.iter()) {
            out.scaled_add(ri, &(&mu - &x));
        }
        out / (self.scale * self.scale)
    }

    pub fn true_score_batch(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.raw_dim());
        for (q, row) in x.outer_iter().enumerate() {
            out.row_mut(q).assign(&self.true_score(row));
        }
        out
    }

    /// `m` i.i.d. draws; the component is drawn first, then the Gaussian.
    pub fn sample(&self, m: usize, seed: u64) -> Result<SampleMatrix> {
        if m == 0 {
            return Err(ScoreError::input("sample size must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pick = WeightedIndex::new(self.weights.iter().copied())
            .map_err(|e| ScoreError::input(format!("bad mixture weights: {e}")))?;
        let d = self.dim();
        let mut data = Array2::zeros((m, d));
        for mut row in data.outer_iter_mut() {
            let mu = self.means.row(pick.sample(&mut rng));
            for (v, &c) in row.iter_mut().zip(mu.iter()) {
                let z: f64 = rng.sample(StandardNormal);
                *v = c + self.scale * z;
            }
        }
        SampleMatrix::new(data)
    }
}

/// Equal-weight mixture of `d` unit Gaussians centred at `d` distinct
/// vertices of `{0,1}^d`, drawn without replacement by the seeded generator.
pub fn make_grid_distribution(d: usize, seed: u64) -> Result<MixtureDistribution> {
    if d == 0 {
        return Err(ScoreError::input("dimension must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut means = Array2::zeros((d, d));
    let mut k = 0;
    // {0,1}^d has 2^d ≥ d + 1 vertices, so rejection terminates
    while k < d {
        let v: Vec<bool> = (0..d).map(|_| rng.gen()).collect();
        if seen.insert(v.clone()) {
            for (i, &b) in v.iter().enumerate() {
                means[[k, i]] = if b { 1.0 } else { 0.0 };
            }
            k += 1;
        }
    }
    MixtureDistribution::new(means, Array1::from_elem(d, 1.0 / d as f64), 1.0)
}

/// Draws `m` samples from `dist`.
pub fn sample(dist: &MixtureDistribution, m: usize, seed: u64) -> Result<SampleMatrix> {
    dist.sample(m, seed)
}

pub fn true_score(dist: &MixtureDistribution, x: ArrayView1<'_, f64>) -> Array1<f64> {
    dist.true_score(x)
}

/// Median of all `M(M-1)/2` pairwise Euclidean distances; the mean of the
/// two middle values when the count is even.
pub fn median_bandwidth(samples: &SampleMatrix) -> Result<f64> {
    let m = samples.len();
    if m < 2 {
        return Err(ScoreError::input("median bandwidth needs at least two samples"));
    }
    let x = samples.view();
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for p in 0..m {
        for l in p + 1..m {
            let r = &x.row(p) - &x.row(l);
            dists.push(r.dot(&r).sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    let med = if n % 2 == 1 { dists[n / 2] } else { 0.5 * (dists[n / 2 - 1] + dists[n / 2]) };
    if !(med > 0.0) {
        if dists[n - 1] == 0.0 {
            return Err(ScoreError::Degenerate("all samples are identical".into()));
        }
        return Err(ScoreError::Degenerate(
            "median pairwise distance is zero (mostly duplicate samples)".into(),
        ));
    }
    Ok(med)
}

/// Anything that predicts scores at a batch of points.
pub trait ScoreModel: Sync {
    fn dim(&self) -> usize;
    fn score_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>>;
}

impl ScoreModel for FittedScoreEstimator {
    fn dim(&self) -> usize {
        FittedScoreEstimator::dim(self)
    }

    fn score_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.predict(x)
    }
}

/// The analytic score of a mixture, wrapped as a model.
#[derive(Debug, Clone)]
pub struct OracleScore(pub MixtureDistribution);

impl ScoreModel for OracleScore {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn score_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.0.true_score_batch(x))
    }
}

/// Predicts zero everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ZeroScore(pub usize);

impl ScoreModel for ZeroScore {
    fn dim(&self) -> usize {
        self.0
    }

    fn score_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(Array2::zeros(x.raw_dim()))
    }
}

/// Normalized squared error, alone or aggregated over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// Mean of the per-seed values.
    pub error: f64,
    pub per_seed: Vec<f64>,
    pub median: f64,
    /// Sample standard deviation (zero for a single value).
    pub std: f64,
}

impl ErrorReport {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(ScoreError::input("error report needs at least one value"));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(ScoreError::numeric("error values must be non-negative"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(ErrorReport { error: mean, median: median(&values), std, per_seed: values })
    }
}

/// Median with the two-middle-values average for even counts. NaNs sort last.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `mean ‖s_p(x) - ŝ(x)‖² / d` over `points`.
pub fn normalized_error_at(model: &dyn ScoreModel, dist: &MixtureDistribution, points: ArrayView2<'_, f64>) -> Result<f64> {
    if model.dim() != dist.dim() || points.ncols() != dist.dim() {
        return Err(ScoreError::input(format!(
            "model dimension {} / points {} vs distribution {}",
            model.dim(),
            points.ncols(),
            dist.dim()
        )));
    }
    let est = model.score_batch(points)?;
    let truth = dist.true_score_batch(points);
    let diff = &truth - &est;
    let total = diff.iter().map(|v| v * v).sum::<f64>();
    let value = total / (points.nrows() as f64 * dist.dim() as f64);
    if !value.is_finite() {
        return Err(ScoreError::numeric("normalized error is not finite"));
    }
    Ok(value)
}

/// Normalized error on `n_eval` fresh samples drawn with `seed`.
pub fn normalized_error(
    model: &dyn ScoreModel,
    dist: &MixtureDistribution,
    n_eval: usize,
    seed: u64,
) -> Result<ErrorReport> {
    let points = dist.sample(n_eval, seed)?;
    ErrorReport::from_values(vec![normalized_error_at(model, dist, points.view())?])
}
