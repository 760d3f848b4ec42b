use crate::error::{Result, ScoreError};

/// How the spectral cut-off is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cutoff {
    /// Keep eigenvalues `σ ≥ λ` of `K/M` (inclusive).
    Threshold(f64),
    /// Keep the top `J` eigenvalues of `K/M` (and anything tied with the J-th).
    Rank(usize),
}

/// Spectral regularizer `g_λ` applied to the empirical integral operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularizerSpec {
    /// `g(σ) = 1/(σ + λ)`.
    Tikhonov { lambda: f64 },
    /// `g(σ) = 1/(σ + λ)` on the non-zero spectrum only.
    TruncatedTikhonov { lambda: f64 },
    /// `g(σ) = 1/σ` for retained eigenvalues, zero otherwise.
    SpectralCutoff(Cutoff),
    /// `t` gradient steps of size `η`; `None` picks `0.9/σ̂_max`.
    Landweber { step: Option<f64>, iterations: usize },
    /// Accelerated semi-iterative scheme with `t` iterations.
    NuMethod { nu: f64, iterations: usize },
}

impl RegularizerSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ScoreError::input(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match *self {
            RegularizerSpec::Tikhonov { lambda } | RegularizerSpec::TruncatedTikhonov { lambda } => {
                positive("lambda", lambda)
            }
            RegularizerSpec::SpectralCutoff(Cutoff::Threshold(l)) => positive("cut-off threshold", l),
            RegularizerSpec::SpectralCutoff(Cutoff::Rank(j)) => {
                if j == 0 {
                    Err(ScoreError::input("cut-off rank must be at least 1"))
                } else {
                    Ok(())
                }
            }
            RegularizerSpec::Landweber { step, iterations } => {
                if let Some(eta) = step {
                    positive("Landweber step", eta)?;
                }
                if iterations == 0 {
                    return Err(ScoreError::input("Landweber needs at least one iteration"));
                }
                Ok(())
            }
            RegularizerSpec::NuMethod { nu, iterations } => {
                if !(nu.is_finite() && nu >= 1.0) {
                    return Err(ScoreError::input(format!("nu must be >= 1, got {nu}")));
                }
                if iterations == 0 {
                    return Err(ScoreError::input("the nu-method needs at least one iteration"));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegularizerSpec::Tikhonov { .. } => "tikhonov",
            RegularizerSpec::TruncatedTikhonov { .. } => "truncated_tikhonov",
            RegularizerSpec::SpectralCutoff(_) => "spectral_cutoff",
            RegularizerSpec::Landweber { .. } => "landweber",
            RegularizerSpec::NuMethod { .. } => "nu_method",
        }
    }

    /// `g_λ(σ)` as a scalar function. Cut-off by rank and Landweber without
    /// an explicit step need the spectrum and are resolved by the caller
    /// first (see [`resolve_threshold`], [`default_landweber_step`]).
    pub fn filter_value(&self, sigma: f64, rank_floor: f64) -> f64 {
        match *self {
            RegularizerSpec::Tikhonov { lambda } => 1.0 / (sigma + lambda),
            RegularizerSpec::TruncatedTikhonov { lambda } => {
                if sigma > rank_floor {
                    1.0 / (sigma + lambda)
                } else {
                    0.0
                }
            }
            RegularizerSpec::SpectralCutoff(Cutoff::Threshold(l)) => {
                if sigma >= l && sigma > rank_floor {
                    1.0 / sigma
                } else {
                    0.0
                }
            }
            RegularizerSpec::SpectralCutoff(Cutoff::Rank(_)) => {
                panic!("rank cut-off must be resolved to a threshold before filtering")
            }
            RegularizerSpec::Landweber { step, iterations } => {
                let eta = step.expect("Landweber step must be resolved before filtering");
                landweber_filter(eta, iterations, sigma)
            }
            RegularizerSpec::NuMethod { nu, iterations } => nu_method_filter(nu, iterations, sigma),
        }
    }
}

/// `(u_t, ω_t)` of the ν-method.
pub fn nu_coefficients(nu: f64, t: usize) -> (f64, f64) {
    let t = t as f64;
    let u = (t - 1.0) * (2.0 * t - 3.0) * (2.0 * t + 2.0 * nu - 1.0)
        / ((t + 2.0 * nu - 1.0) * (2.0 * t + 4.0 * nu - 1.0) * (2.0 * t + 2.0 * nu - 3.0));
    let omega = 4.0 * (2.0 * t + 2.0 * nu - 1.0) * (t + nu - 1.0)
        / ((t + 2.0 * nu - 1.0) * (2.0 * t + 4.0 * nu - 1.0));
    (u, omega)
}

/// `η Σ_{i<t} (1 - ησ)^i`, equal to `(1 - (1 - ησ)^t)/σ` and `tη` at zero.
pub fn landweber_filter(eta: f64, t: usize, sigma: f64) -> f64 {
    let q = 1.0 - eta * sigma;
    let mut acc = 0.0;
    let mut pow = 1.0;
    for _ in 0..t {
        acc += pow;
        pow *= q;
    }
    eta * acc
}

/// Polynomial filter of the ν-method after `t` iterations, from the scalar
/// form of the three-term recursion `g_t = (1+u_t)g_{t-1} - u_t g_{t-2} + ω_t(1 - σ g_{t-1})`.
pub fn nu_method_filter(nu: f64, t: usize, sigma: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, nu_coefficients(nu, 1).1);
    for k in 2..=t {
        let (u, w) = nu_coefficients(nu, k);
        let next = (1.0 + u) * cur - u * prev + w * (1.0 - sigma * cur);
        prev = cur;
        cur = next;
    }
    if t == 0 {
        0.0
    } else {
        cur
    }
}

/// `t = ⌊1/λ⌋`, at least one.
pub fn landweber_iterations(lambda: f64) -> usize {
    ((1.0 / lambda).floor() as usize).max(1)
}

/// `t = ⌊λ^{-1/2}⌋`, at least one.
pub fn nu_iterations(lambda: f64) -> usize {
    ((1.0 / lambda.sqrt()).floor() as usize).max(1)
}

/// Default Landweber step `0.9/σ̂_max`.
pub fn default_landweber_step(sigma_max: f64) -> f64 {
    0.9 / sigma_max
}

/// Threshold for a rank-`J` cut-off given eigenvalues of `K/M` in
/// descending order with multiplicity. Returns `(threshold, clamped_rank)`;
/// the rank is clamped to the numerical rank.
pub fn resolve_threshold(values: &[f64], rank: usize, rank_floor: f64) -> (f64, usize) {
    let numeric_rank = values.iter().filter(|&&s| s > rank_floor).count().max(1);
    let j = rank.min(numeric_rank);
    (values[j - 1], j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn first_nu_coefficients() {
        for nu in [1.0, 1.5, 2.0, 4.0] {
            assert_eq!(nu_coefficients(nu, 1).0, 0.0);
        }
        let (_, w1) = nu_coefficients(1.0, 1);
        assert_relative_eq!(w1, 6.0 / 5.0, max_relative = 1e-15);
        // ω_1 = 2(2ν+1)/(4ν+1)
        for nu in [1.0, 2.5, 7.0] {
            assert_relative_eq!(nu_coefficients(nu, 1).1, 2.0 * (2.0 * nu + 1.0) / (4.0 * nu + 1.0), max_relative = 1e-15);
        }
        for t in 1..200 {
            let (u, w) = nu_coefficients(1.0, t);
            assert!(u.is_finite() && w.is_finite());
        }
    }

    #[test]
    fn landweber_filter_closed_form() {
        let eta = 0.7;
        for t in [1, 2, 5, 30] {
            assert_relative_eq!(landweber_filter(eta, t, 0.0), t as f64 * eta, max_relative = 1e-15);
            for s in [0.1, 0.5, 1.2] {
                let closed = (1.0 - (1.0 - eta * s).powi(t as i32)) / s;
                assert_relative_eq!(landweber_filter(eta, t, s), closed, max_relative = 1e-12);
            }
        }
    }

    /// The ν-method polynomials approach 1/σ away from zero. The residual
    /// `1 - σg_t(σ)` decays polynomially (Jacobi-type), not geometrically.
    #[test]
    fn nu_filter_approximates_inverse() {
        for s in [0.2, 0.5, 0.9] {
            let residual = |t| (1.0 - s * nu_method_filter(1.0, t, s)).abs();
            assert!(residual(200) < 1e-3, "σ={s}: {}", residual(200));
            assert!(residual(200) < residual(20));
        }
        assert_relative_eq!(nu_method_filter(1.0, 1, 0.3), 1.2);
    }

    #[test]
    fn iteration_mappings() {
        assert_eq!(landweber_iterations(0.01), 100);
        assert_eq!(landweber_iterations(3.0), 1);
        assert_eq!(nu_iterations(0.01), 10);
        assert_eq!(nu_iterations(1e-4), 100);
    }

    #[test]
    fn threshold_resolution() {
        let v = [4.0, 2.0, 2.0, 1.0, 1e-20];
        assert_eq!(resolve_threshold(&v, 2, 1e-9), (2.0, 2));
        assert_eq!(resolve_threshold(&v, 9, 1e-9), (1.0, 4));
    }

    #[test]
    fn validation() {
        assert!(RegularizerSpec::Tikhonov { lambda: 0.0 }.validate().is_err());
        assert!(RegularizerSpec::SpectralCutoff(Cutoff::Rank(0)).validate().is_err());
        assert!(RegularizerSpec::NuMethod { nu: 0.5, iterations: 3 }.validate().is_err());
        assert!(RegularizerSpec::Landweber { step: None, iterations: 0 }.validate().is_err());
        assert!(RegularizerSpec::Landweber { step: Some(0.1), iterations: 3 }.validate().is_ok());
    }
}
