//! Priors: PC priors for the Matérn range and standard deviation, a Gaussian
//! prior on the Fisher transform of φ, and Gaussian fixed effects.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use core::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// ρ0 with P(ρ < ρ0) = 0.5.
    pub range_median: f64,
    /// σ0 with P(σ > σ0) = 0.01.
    pub sigma_upper: f64,
    /// Standard deviation of the zero-mean Gaussian prior on z = log((1+φ)/(1−φ)).
    #[serde(default = "default_phi_sd")]
    pub phi_z_sd: f64,
    /// Standard deviation of the zero-mean Gaussian prior on each fixed effect.
    #[serde(default = "default_beta_sd")]
    pub beta_sd: f64,
    /// Per-term overrides of `beta_sd`.
    #[serde(default)]
    pub beta_sd_overrides: BTreeMap<String, f64>,
}

fn default_phi_sd() -> f64 {
    1.0
}

fn default_beta_sd() -> f64 {
    10.0
}

const SIGMA_TAIL: f64 = 0.01;

impl PriorSpec {
    pub fn new(range_median: f64, sigma_upper: f64) -> Result<Self> {
        let p = Self {
            range_median,
            sigma_upper,
            phi_z_sd: default_phi_sd(),
            beta_sd: default_beta_sd(),
            beta_sd_overrides: BTreeMap::new(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Defaults for a study region of the given diameter: ρ0 = diameter / 2, σ0 = 1.
    pub fn for_diameter(diameter: f64) -> Result<Self> {
        Self::new(0.5 * diameter, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{what} must be positive, got {v}")))
            }
        };
        positive(self.range_median, "prior range median")?;
        positive(self.sigma_upper, "prior sigma upper bound")?;
        positive(self.phi_z_sd, "phi prior standard deviation")?;
        positive(self.beta_sd, "fixed-effect prior standard deviation")?;
        for (k, v) in &self.beta_sd_overrides {
            positive(*v, &format!("prior standard deviation of `{k}`"))?;
        }
        Ok(())
    }

    pub fn beta_sd_for(&self, name: &str) -> f64 {
        self.beta_sd_overrides.get(name).copied().unwrap_or(self.beta_sd)
    }

    fn lambda_range(&self) -> f64 {
        LN_2 * self.range_median
    }

    fn lambda_sigma(&self) -> f64 {
        -SIGMA_TAIL.ln() / self.sigma_upper
    }

    /// `log π(ρ)` with π(ρ) = λ₁ρ⁻² exp(−λ₁/ρ).
    pub fn range_logdensity(&self, rho: f64) -> f64 {
        let l = self.lambda_range();
        l.ln() - 2.0 * rho.ln() - l / rho
    }

    /// `log π(σ)` with π(σ) = λ₂ exp(−λ₂σ).
    pub fn sigma_logdensity(&self, sigma: f64) -> f64 {
        let l = self.lambda_sigma();
        l.ln() - l * sigma
    }

    pub fn phi_z_logdensity(&self, z: f64) -> f64 {
        let s = self.phi_z_sd;
        -0.5 * (z / s) * (z / s) - s.ln() - 0.5 * (2.0 * PI).ln()
    }

    /// Log density of `(log ρ, log σ, z)` for the components flagged in `free`.
    pub fn theta_logdensity(&self, theta: &[f64; 3], free: &[bool; 3]) -> f64 {
        let mut s = 0.0;
        if free[0] {
            let rho = theta[0].exp();
            s += self.range_logdensity(rho) + theta[0];
        }
        if free[1] {
            let sigma = theta[1].exp();
            s += self.sigma_logdensity(sigma) + theta[1];
        }
        if free[2] {
            s += self.phi_z_logdensity(theta[2]);
        }
        s
    }
}

/// `log π(ρ) + log π(σ)` under the PC-Matérn prior.
pub fn pc_prior_logdensity(rho: f64, sigma: f64, prior: &PriorSpec) -> Result<f64> {
    if !(rho > 0.0 && sigma > 0.0) {
        return Err(invalid("range and standard deviation must be positive"));
    }
    Ok(prior.range_logdensity(rho) + prior.sigma_logdensity(sigma))
}

/// Fisher transform `z = log((1+φ)/(1−φ))` and its inverse.
pub fn phi_to_z(phi: f64) -> f64 {
    ((1.0 + phi) / (1.0 - phi)).ln()
}

pub fn z_to_phi(z: f64) -> f64 {
    (0.5 * z).tanh()
}
