use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::KernelFamily;

/// How the coefficient fields are drawn each sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThetaUpdate {
    /// One multivariate normal block per basis index, cycling over the indices.
    PerCoefficient,
    /// All coefficients of all sites in one block, conditional on delta.
    Joint,
    /// All coefficients in one block with the delta chains integrated out,
    /// followed immediately by the delta draw. Removes the coefficient/delta
    /// coupling from the Gibbs scan.
    #[default]
    Collapsed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Iterations per step-size adaptation batch during burn-in.
    pub adapt_window: usize,
    pub target_acceptance: f64,
    /// Initial random-walk scale on the log of each decay parameter.
    pub initial_step: f64,
    pub theta_update: ThetaUpdate,
    /// When false the delta chains are pinned at zero (model without the random effect).
    pub include_delta: bool,
    pub kernel: KernelFamily,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 25_000,
            burn_in: 5_000,
            thin: 10,
            seed: 1,
            adapt_window: 25,
            target_acceptance: 0.44,
            initial_step: 0.5,
            theta_update: ThetaUpdate::default(),
            include_delta: true,
            kernel: KernelFamily::Gaussian,
        }
    }
}

impl SamplerConfig {
    /// Shortened run, mostly for tests and examples.
    pub fn short(iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Self {
        Self {
            iterations,
            burn_in,
            thin,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::config(format!(
                "burn-in ({}) must be smaller than the iteration count ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::config("thin must be at least 1"));
        }
        if self.adapt_window == 0 {
            return Err(Error::config("adapt_window must be at least 1"));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::config("target_acceptance must lie in (0, 1)"));
        }
        if !(self.initial_step >= 0.0 && self.initial_step.is_finite()) {
            return Err(Error::config("initial_step must be non-negative"));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retention_arithmetic() {
        assert_eq!(SamplerConfig::short(100, 50, 5, 0).retained(), 10);
        assert_eq!(SamplerConfig::default().retained(), 2000);
        assert_eq!(SamplerConfig::short(2000, 500, 10, 0).retained(), 150);
        assert_eq!(SamplerConfig::short(107, 50, 5, 0).retained(), 11);
    }

    #[test]
    fn invalid_configs() {
        assert!(SamplerConfig::short(100, 100, 5, 0).validate().is_err());
        assert!(SamplerConfig::short(100, 10, 0, 0).validate().is_err());
        let mut c = SamplerConfig::default();
        c.target_acceptance = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_defaults_fill_missing_fields() {
        let c: SamplerConfig =
            serde_json::from_str(r#"{"iterations": 300, "burn_in": 100}"#).unwrap();
        assert_eq!(c.thin, 10);
        assert_eq!(c.theta_update, ThetaUpdate::Collapsed);
        assert!(serde_json::from_str::<SamplerConfig>(r#"{"iters": 3}"#).is_err());
    }
}
