use serde::{Deserialize, Serialize};

use crate::error::{Result, ScoreError};

/// Radial profile family. Both are normalized so that `φ(0) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// Inverse multiquadric `φ(u) = (1 + u/σ²)^(-1/2)`.
    Imq,
    /// Gaussian `φ(u) = exp(-u / (2σ²))`.
    Gaussian,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Imq => "imq",
            KernelFamily::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "imq" => Ok(KernelFamily::Imq),
            "gaussian" | "rbf" => Ok(KernelFamily::Gaussian),
            other => Err(ScoreError::input(format!("unknown kernel family '{other}'"))),
        }
    }
}

/// Value and first three derivatives of the radial profile with respect to
/// the squared distance `u = ‖x - y‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialDerivs {
    pub phi: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// A scalar radial kernel `k(x, y) = φ(‖x - y‖²)` with an explicit bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarRadialKernel {
    family: KernelFamily,
    bandwidth: f64,
}

impl ScalarRadialKernel {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(ScoreError::input(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(ScalarRadialKernel { family, bandwidth })
    }

    pub fn imq(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Imq, bandwidth)
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, bandwidth)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Checked version of [`Self::derivs_unchecked`].
    pub fn derivs(&self, u: f64) -> Result<RadialDerivs> {
        if !(u.is_finite() && u >= 0.0) {
            return Err(ScoreError::input(format!(
                "squared distance must be finite and non-negative, got {u}"
            )));
        }
        Ok(self.derivs_unchecked(u))
    }

    /// `(φ, φ', φ'', φ''')` at `u`. Callers guarantee `u >= 0`.
    #[inline]
    pub fn derivs_unchecked(&self, u: f64) -> RadialDerivs {
        let s2 = self.bandwidth * self.bandwidth;
        match self.family {
            KernelFamily::Imq => {
                // w = 1 + u/σ²; each derivative picks up -(2k+1)/(2σ²) / w.
                let inv_w = 1.0 / (1.0 + u / s2);
                let phi = inv_w.sqrt();
                let d1 = -0.5 / s2 * phi * inv_w;
                let d2 = -1.5 / s2 * d1 * inv_w;
                let d3 = -2.5 / s2 * d2 * inv_w;
                RadialDerivs { phi, d1, d2, d3 }
            }
            KernelFamily::Gaussian => {
                let c = -0.5 / s2;
                let phi = (c * u).exp();
                let d1 = c * phi;
                let d2 = c * d1;
                let d3 = c * d2;
                RadialDerivs { phi, d1, d2, d3 }
            }
        }
    }

    /// `(φ', φ'')` only; the hot path of Gram products.
    #[inline]
    pub fn d1_d2(&self, u: f64) -> (f64, f64) {
        let r = self.derivs_unchecked(u);
        (r.d1, r.d2)
    }

    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        self.derivs_unchecked(u).phi
    }
}

/// Free-function form of [`ScalarRadialKernel::derivs`].
pub fn scalar_derivs(kernel: &ScalarRadialKernel, u: f64) -> Result<RadialDerivs> {
    kernel.derivs(u)
}
