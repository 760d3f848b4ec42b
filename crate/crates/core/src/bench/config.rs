use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::Deserialize;

use crate::error::{Result, ScoreError};
use crate::kernels::{GramMode, KernelFamily, KernelKind};
use crate::oracles::{make_grid_distribution, MixtureDistribution};

pub const SCHEMA_VERSION: u32 = 1;

/// `{10^0, …, 10^-8}`.
pub fn default_lambdas() -> Vec<f64> {
    (0..=8).map(|k| 10f64.powi(-k)).collect()
}

/// `{20, 30, …, 100}`.
pub fn default_nu_iterations() -> Vec<usize> {
    (2..=10).map(|k| 10 * k).collect()
}

/// Fractions of the spectrum kept by the spectral cut-off.
pub fn default_cutoff_fractions() -> Vec<f64> {
    vec![0.99, 0.97, 0.95, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4]
}

/// Experiment description, read from TOML. Unknown keys are errors.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub distribution: DistributionConfig,
    pub dims: Vec<usize>,
    pub sample_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Mixed into every derived seed; the CLI `--seed` overrides it.
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
    pub estimators: Vec<EstimatorConfig>,
}

fn default_eval_size() -> usize {
    1024
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionConfig {
    /// Equal-weight unit Gaussians at `d` seeded vertices of `{0,1}^d`.
    Grid {
        #[serde(default)]
        seed: u64,
    },
    /// `N(0, I_d)`.
    Gaussian,
    /// Means, weights and scale from a TOML file; `dims` must match.
    MixtureFile { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureFile {
    means: Vec<Vec<f64>>,
    weights: Vec<f64>,
    #[serde(default = "one")]
    scale: f64,
}

fn one() -> f64 {
    1.0
}

impl DistributionConfig {
    pub fn build(&self, d: usize, base_dir: &Path) -> Result<MixtureDistribution> {
        match self {
            DistributionConfig::Grid { seed } => make_grid_distribution(d, *seed),
            DistributionConfig::Gaussian => MixtureDistribution::standard_normal(d),
            DistributionConfig::MixtureFile { path } => {
                let path = base_dir.join(path);
                let text = std::fs::read_to_string(&path)?;
                let f: MixtureFile = toml::from_str(&text)
                    .map_err(|e| ScoreError::input(format!("{}: {e}", path.display())))?;
                let k = f.means.len();
                if f.means.iter().any(|m| m.len() != d) {
                    return Err(ScoreError::input(format!(
                        "{}: means must all have dimension {d}",
                        path.display()
                    )));
                }
                let means = Array2::from_shape_vec((k, d), f.means.concat())
                    .map_err(|e| ScoreError::input(e.to_string()))?;
                MixtureDistribution::new(means, Array1::from(f.weights), f.scale)
            }
        }
    }
}

/// Kernel bandwidth: the median heuristic on each training set, or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    #[default]
    Median,
    Fixed(f64),
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            Value(f64),
        }
        match Raw::deserialize(de)? {
            Raw::Name(s) if s == "median" => Ok(Bandwidth::Median),
            Raw::Name(s) => Err(serde::de::Error::custom(format!("bandwidth must be \"median\" or a number, got {s:?}"))),
            Raw::Value(v) => Ok(Bandwidth::Fixed(v)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramModeConfig {
    Dense,
    Implicit,
    Factored,
}

impl From<GramModeConfig> for GramMode {
    fn from(m: GramModeConfig) -> Self {
        match m {
            GramModeConfig::Dense => GramMode::Dense,
            GramModeConfig::Implicit => GramMode::Implicit,
            GramModeConfig::Factored => GramMode::Factored,
        }
    }
}

/// One estimator family and its hyperparameter grid.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(try_from = "RawEstimator")]
pub struct EstimatorConfig {
    /// Label in the output; defaults to `<scheme>_<kernel>`.
    pub id: Option<String>,
    pub scheme: SchemeConfig,
    pub kernel: KernelKind,
    pub family: KernelFamily,
    pub bandwidth: Bandwidth,
    /// Gram storage. Defaults: dense for direct/spectral schemes, factored
    /// for curl-free iterative ones.
    pub gram_mode: Option<GramModeConfig>,
}

/// Flat on-disk form of an estimator entry; keys that do not apply to the
/// chosen scheme are rejected during conversion.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimator {
    scheme: String,
    id: Option<String>,
    #[serde(default = "default_kernel")]
    kernel: KernelKind,
    #[serde(default = "default_family")]
    family: KernelFamily,
    #[serde(default)]
    bandwidth: Bandwidth,
    gram_mode: Option<GramModeConfig>,
    lambdas: Option<Vec<f64>>,
    fractions: Option<Vec<f64>>,
    iterations: Option<Vec<usize>>,
    nu: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    step: Option<f64>,
    subset_fraction: Option<f64>,
}

impl TryFrom<RawEstimator> for EstimatorConfig {
    type Error = String;

    fn try_from(r: RawEstimator) -> std::result::Result<Self, String> {
        let lambdas = || r.lambdas.clone().unwrap_or_else(default_lambdas);
        let scheme = match r.scheme.as_str() {
            "tikhonov" => SchemeConfig::Tikhonov {
                lambdas: lambdas(),
                tol: r.tol.unwrap_or_else(tight_tol),
                max_iter: r.max_iter.unwrap_or_else(tight_iters),
            },
            "tikhonov_cg" => SchemeConfig::TikhonovCg {
                lambdas: lambdas(),
                tol: r.tol.unwrap_or_else(cg_tol),
                max_iter: r.max_iter.unwrap_or_else(cg_iters),
            },
            "truncated_tikhonov" => SchemeConfig::TruncatedTikhonov { lambdas: lambdas() },
            "landweber" => SchemeConfig::Landweber { lambdas: lambdas(), step: r.step },
            "nystrom" => SchemeConfig::Nystrom {
                lambdas: lambdas(),
                subset_fraction: r.subset_fraction.ok_or("nystrom needs subset_fraction")?,
            },
            "spectral_cutoff" => SchemeConfig::SpectralCutoff {
                fractions: r.fractions.clone().unwrap_or_else(default_cutoff_fractions),
            },
            "nu_method" => SchemeConfig::NuMethod {
                iterations: r.iterations.clone().unwrap_or_else(default_nu_iterations),
                nu: r.nu.unwrap_or_else(default_nu),
            },
            "oracle" => SchemeConfig::Oracle,
            "zero" => SchemeConfig::Zero,
            other => return Err(format!("unknown scheme {other:?}")),
        };
        let allowed: &[&str] = match scheme {
            SchemeConfig::Tikhonov { .. } | SchemeConfig::TikhonovCg { .. } => &["lambdas", "tol", "max_iter"],
            SchemeConfig::TruncatedTikhonov { .. } => &["lambdas"],
            SchemeConfig::Landweber { .. } => &["lambdas", "step"],
            SchemeConfig::Nystrom { .. } => &["lambdas", "subset_fraction"],
            SchemeConfig::SpectralCutoff { .. } => &["fractions"],
            SchemeConfig::NuMethod { .. } => &["iterations", "nu"],
            SchemeConfig::Oracle | SchemeConfig::Zero => &[],
        };
        let given = [
            ("lambdas", r.lambdas.is_some()),
            ("fractions", r.fractions.is_some()),
            ("iterations", r.iterations.is_some()),
            ("nu", r.nu.is_some()),
            ("tol", r.tol.is_some()),
            ("max_iter", r.max_iter.is_some()),
            ("step", r.step.is_some()),
            ("subset_fraction", r.subset_fraction.is_some()),
        ];
        for (key, present) in given {
            if present && !allowed.contains(&key) {
                return Err(format!("key {key:?} does not apply to scheme {:?}", r.scheme));
            }
        }
        Ok(EstimatorConfig {
            id: r.id,
            scheme,
            kernel: r.kernel,
            family: r.family,
            bandwidth: r.bandwidth,
            gram_mode: r.gram_mode,
        })
    }
}

fn default_kernel() -> KernelKind {
    KernelKind::CurlFree
}

fn default_family() -> KernelFamily {
    KernelFamily::Imq
}

/// Resolved estimator scheme with its hyperparameter grid.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemeConfig {
    /// Direct solve when the dense Gram fits the budget, otherwise
    /// conjugate gradient to `tol` (tight by default).
    Tikhonov { lambdas: Vec<f64>, tol: f64, max_iter: usize },
    TikhonovCg { lambdas: Vec<f64>, tol: f64, max_iter: usize },
    TruncatedTikhonov { lambdas: Vec<f64> },
    /// Keeps the top `round(fraction · Md)` eigenvalues.
    SpectralCutoff { fractions: Vec<f64> },
    /// `t = ⌊1/λ⌋` iterations per λ.
    Landweber { lambdas: Vec<f64>, step: Option<f64> },
    NuMethod { iterations: Vec<usize>, nu: f64 },
    /// Truncated-Tikhonov Nyström on `round(fraction · M)` subset points
    /// drawn without replacement.
    Nystrom { lambdas: Vec<f64>, subset_fraction: f64 },
    /// The analytic score.
    Oracle,
    /// Predicts zero.
    Zero,
}

fn tight_tol() -> f64 {
    1e-8
}
fn tight_iters() -> usize {
    2000
}
fn cg_tol() -> f64 {
    crate::estimators::CG_DEFAULT_TOL
}
fn cg_iters() -> usize {
    crate::estimators::CG_DEFAULT_MAX_ITER
}
fn default_nu() -> f64 {
    1.0
}

impl SchemeConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeConfig::Tikhonov { .. } => "tikhonov",
            SchemeConfig::TikhonovCg { .. } => "tikhonov_cg",
            SchemeConfig::TruncatedTikhonov { .. } => "truncated_tikhonov",
            SchemeConfig::SpectralCutoff { .. } => "spectral_cutoff",
            SchemeConfig::Landweber { .. } => "landweber",
            SchemeConfig::NuMethod { .. } => "nu_method",
            SchemeConfig::Nystrom { .. } => "nystrom",
            SchemeConfig::Oracle => "oracle",
            SchemeConfig::Zero => "zero",
        }
    }

    /// Hyperparameter name and grid.
    pub fn grid(&self) -> (&'static str, Vec<f64>) {
        match self {
            SchemeConfig::Tikhonov { lambdas, .. }
            | SchemeConfig::TikhonovCg { lambdas, .. }
            | SchemeConfig::TruncatedTikhonov { lambdas }
            | SchemeConfig::Landweber { lambdas, .. }
            | SchemeConfig::Nystrom { lambdas, .. } => ("lambda", lambdas.clone()),
            SchemeConfig::SpectralCutoff { fractions } => ("fraction", fractions.clone()),
            SchemeConfig::NuMethod { iterations, .. } => {
                ("iterations", iterations.iter().map(|&t| t as f64).collect())
            }
            SchemeConfig::Oracle | SchemeConfig::Zero => ("none", vec![0.0]),
        }
    }

    fn validate(&self) -> Result<()> {
        let (name, grid) = self.grid();
        if grid.is_empty() {
            return Err(ScoreError::input(format!("{}: empty {name} grid", self.name())));
        }
        let positive = |what: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ScoreError::input(format!("{}: {what} must be positive, got {v}", self.name())))
            }
        };
        match self {
            SchemeConfig::SpectralCutoff { fractions } => {
                if fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
                    return Err(ScoreError::input("spectral_cutoff: fractions must lie in (0, 1]"));
                }
            }
            SchemeConfig::NuMethod { iterations, nu } => {
                if iterations.contains(&0) {
                    return Err(ScoreError::input("nu_method: iterations must be ≥ 1"));
                }
                if !(*nu >= 1.0) {
                    return Err(ScoreError::input("nu_method: nu must be ≥ 1"));
                }
            }
            SchemeConfig::Nystrom { subset_fraction, .. } => {
                if !(*subset_fraction > 0.0 && *subset_fraction <= 1.0) {
                    return Err(ScoreError::input("nystrom: subset_fraction must lie in (0, 1]"));
                }
            }
            SchemeConfig::Tikhonov { tol, max_iter, .. } | SchemeConfig::TikhonovCg { tol, max_iter, .. } => {
                positive("tol", *tol)?;
                if *max_iter == 0 {
                    return Err(ScoreError::input(format!("{}: max_iter must be ≥ 1", self.name())));
                }
            }
            SchemeConfig::Landweber { step: Some(s), .. } => positive("step", *s)?,
            _ => {}
        }
        if name == "lambda" {
            for &l in &grid {
                positive("lambda", l)?;
            }
        }
        Ok(())
    }
}

impl EstimatorConfig {
    pub fn label(&self) -> String {
        self.id.clone().unwrap_or_else(|| match self.scheme {
            SchemeConfig::Oracle | SchemeConfig::Zero => self.scheme.name().to_string(),
            _ => format!("{}_{}", self.scheme.name(), self.kernel.name()),
        })
    }

    /// Kernel column of the results; `none` for kernel-free baselines.
    pub fn kernel_name(&self) -> &'static str {
        match self.scheme {
            SchemeConfig::Oracle | SchemeConfig::Zero => "none",
            _ => self.kernel.name(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ScoreError::input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScoreError::input(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScoreError::input(format!(
                "config schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for (what, empty) in [
            ("dims", self.dims.is_empty()),
            ("sample_sizes", self.sample_sizes.is_empty()),
            ("seeds", self.seeds.is_empty()),
            ("estimators", self.estimators.is_empty()),
        ] {
            if empty {
                return Err(ScoreError::input(format!("config: {what} must be non-empty")));
            }
        }
        if self.dims.contains(&0) || self.sample_sizes.contains(&0) || self.eval_size == 0 {
            return Err(ScoreError::input("config: dims, sample_sizes and eval_size must be ≥ 1"));
        }
        let mut labels = std::collections::HashSet::new();
        for e in &self.estimators {
            e.scheme.validate()?;
            if let Bandwidth::Fixed(b) = e.bandwidth {
                if !(b.is_finite() && b > 0.0) {
                    return Err(ScoreError::input(format!("{}: bandwidth must be positive", e.label())));
                }
            }
            if !labels.insert(e.label()) {
                return Err(ScoreError::input(format!("duplicate estimator id {}", e.label())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
dims = [2]
sample_sizes = [32]
seeds = [0, 1]

[distribution]
kind = "grid"

[[estimators]]
scheme = "tikhonov"
kernel = "curl_free"

[[estimators]]
scheme = "spectral_cutoff"
kernel = "diagonal"
bandwidth = 0.5

[[estimators]]
scheme = "oracle"
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.eval_size, 1024);
        assert_eq!(c.estimators.len(), 3);
        assert_eq!(c.estimators[0].label(), "tikhonov_curl_free");
        assert_eq!(c.estimators[0].scheme.grid().1, default_lambdas());
        assert_eq!(c.estimators[1].bandwidth, Bandwidth::Fixed(0.5));
        assert_eq!(c.estimators[2].bandwidth, Bandwidth::Median);
        assert_eq!(c.distribution, DistributionConfig::Grid { seed: 0 });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("seeds = [0, 1]", "seeds = [0, 1]\nseed = 3");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = MINIMAL.replace("kernel = \"diagonal\"", "kernel = \"diagonal\"\nlamdas = [1.0]");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        for (from, to) in [
            ("schema_version = 1", "schema_version = 2"),
            ("dims = [2]", "dims = []"),
            ("bandwidth = 0.5", "bandwidth = \"mean\""),
            ("scheme = \"tikhonov\"", "scheme = \"tikhonov\"\nlambdas = [-1.0]"),
        ] {
            assert!(ExperimentConfig::from_toml(&MINIMAL.replace(from, to)).is_err(), "{to}");
        }
    }
}
