//! Model quantities: observed curves, the parameter state and the priors.
//!
//! For site `j` with observation times `t_1j < ... < t_nj`:
//!
//! ```text
//! y_ij      ~ N(sum_r theta_rj b_r(t_ij) + delta_ij, tau2)
//! theta_r   ~ N_m(mu_r 1, kappa2 R(spatial_decay))
//! delta_1j  ~ N(0, nu2)
//! delta_ij  ~ N(exp(-ar_decay d_ij) delta_(i-1)j, nu2),   d_ij = t_ij - t_(i-1)j
//! mu_r      ~ N(o, v2)
//! spatial_decay, ar_decay, tau2, kappa2, nu2 ~ inverse gamma
//! ```

mod density;
mod kernel;

pub(crate) use density::theta_prior_term;
pub use density::{ar_coefficient, ar_log_density, log_joint, log_joint_with_factor, LogJoint};
pub(crate) use kernel::jittered_cholesky;
pub use kernel::{
    cross_distances, kernel_matrix, pairwise_distances, KernelFactor, KernelFamily, SpatialKernel,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::basis::{design_matrix, BasisMatrix, BasisSpec};
use crate::error::{Error, Result};

pub type Coord = [f64; 2];

/// One monitored location.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSeries {
    pub site_id: String,
    pub coords: Coord,
    pub times: Vec<f64>,
    /// Values at masked positions are carried along but never read by likelihood code.
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

impl SiteSeries {
    pub fn new(
        site_id: impl Into<String>,
        coords: Coord,
        times: Vec<f64>,
        values: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self> {
        let s = Self {
            site_id: site_id.into(),
            coords,
            times,
            values,
            missing,
        };
        s.validate()?;
        Ok(s)
    }

    /// Fully observed series.
    pub fn observed(
        site_id: impl Into<String>,
        coords: Coord,
        times: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let n = times.len();
        Self::new(site_id, coords, times, values, vec![false; n])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if self.values.len() != n || self.missing.len() != n {
            return Err(Error::input(format!(
                "site {}: times/values/mask lengths differ ({}, {}, {})",
                self.site_id,
                n,
                self.values.len(),
                self.missing.len()
            )));
        }
        if n == 0 {
            return Err(Error::input(format!(
                "site {} has no time points",
                self.site_id
            )));
        }
        if !self.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::input(format!(
                "site {} has non-finite coordinates",
                self.site_id
            )));
        }
        if let Some(i) = self.times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::input(format!(
                "site {}: times not strictly increasing at index {}",
                self.site_id,
                i + 1
            )));
        }
        if let Some(i) = (0..n).find(|&i| !self.missing[i] && !self.values[i].is_finite()) {
            return Err(Error::input(format!(
                "site {}: non-finite value at index {i}",
                self.site_id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_observed(&self) -> usize {
        self.missing.iter().filter(|&&m| !m).count()
    }

    pub fn n_missing(&self) -> usize {
        self.len() - self.n_observed()
    }

    pub fn gaps(&self) -> GapVector {
        GapVector::from_times(&self.times)
    }
}

/// `d_1 = 0`, `d_i = t_i - t_(i-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapVector(pub Vec<f64>);

impl GapVector {
    pub fn from_times(times: &[f64]) -> Self {
        let mut out = Vec::with_capacity(times.len());
        if !times.is_empty() {
            out.push(0.0);
        }
        out.extend(times.windows(2).map(|w| w[1] - w[0]));
        GapVector(out)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Sorts sites by id. Every fit and prediction works on this ordering.
pub fn canonicalize(data: &mut [SiteSeries]) {
    data.sort_by(|a, b| a.site_id.cmp(&b.site_id));
}

pub fn coords_of(data: &[SiteSeries]) -> Vec<Coord> {
    data.iter().map(|s| s.coords).collect()
}

/// Design matrices for every site, all on the same basis.
pub fn design_matrices(spec: &BasisSpec, data: &[SiteSeries]) -> Result<Vec<BasisMatrix>> {
    data.iter().map(|s| design_matrix(spec, &s.times)).collect()
}

/// One point in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// `(p + 1) x m`; column `j` holds the coefficients of site `j`.
    pub theta: DMatrix<f64>,
    pub mu_theta: Vec<f64>,
    /// `delta[j][i]`, defined at every time point including masked ones.
    pub delta: Vec<Vec<f64>>,
    pub tau2: f64,
    pub nu2: f64,
    pub kappa2: f64,
    pub spatial_decay: f64,
    pub ar_decay: f64,
}

impl ModelState {
    pub fn n_basis(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_sites(&self) -> usize {
        self.theta.ncols()
    }

    pub fn validate(&self, data: &[SiteSeries]) -> Result<()> {
        for (name, v) in [
            ("tau2", self.tau2),
            ("nu2", self.nu2),
            ("kappa2", self.kappa2),
            ("spatial_decay", self.spatial_decay),
            ("ar_decay", self.ar_decay),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.theta.ncols() != data.len() || self.delta.len() != data.len() {
            return Err(Error::input(format!(
                "state has {} theta columns and {} delta chains for {} sites",
                self.theta.ncols(),
                self.delta.len(),
                data.len()
            )));
        }
        if self.mu_theta.len() != self.theta.nrows() {
            return Err(Error::input("mu_theta length differs from basis count"));
        }
        for (j, (d, s)) in self.delta.iter().zip(data).enumerate() {
            if d.len() != s.len() {
                return Err(Error::input(format!(
                    "delta chain {j} has {} entries, site has {}",
                    d.len(),
                    s.len()
                )));
            }
        }
        Ok(())
    }

    /// Noise-free curve `sum_r theta_rj b_r(t) + delta_j` at the site's own times.
    pub fn fitted_signal(&self, j: usize, basis: &BasisMatrix) -> Vec<f64> {
        let coef: Vec<f64> = self.theta.column(j).iter().copied().collect();
        basis
            .expand(&coef)
            .into_iter()
            .zip(&self.delta[j])
            .map(|(x, d)| x + d)
            .collect()
    }

    /// Basis part only, `sum_r theta_rj b_r(t)`.
    pub fn fitted_mean(&self, j: usize, basis: &BasisMatrix) -> Vec<f64> {
        let coef: Vec<f64> = self.theta.column(j).iter().copied().collect();
        basis.expand(&coef)
    }
}

/// Inverse gamma with density `b^a / Gamma(a) x^(-a-1) exp(-b / x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseGamma {
    pub shape: f64,
    pub scale: f64,
}

impl InverseGamma {
    pub const fn new(shape: f64, scale: f64) -> Self {
        Self { shape, scale }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.shape > 0.0 && self.scale > 0.0 && self.shape.is_finite() && self.scale.is_finite()
        {
            Ok(())
        } else {
            Err(Error::config(format!(
                "{name}: inverse gamma shape and scale must be positive"
            )))
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.scale.ln()
            - ln_gamma(self.shape)
            - (self.shape + 1.0) * x.ln()
            - self.scale / x
    }

    /// `None` when the shape is at most one.
    pub fn mean(&self) -> Option<f64> {
        (self.shape > 1.0).then(|| self.scale / (self.shape - 1.0))
    }

    /// `None` when the shape is at most two.
    pub fn variance(&self) -> Option<f64> {
        (self.shape > 2.0)
            .then(|| self.scale.powi(2) / ((self.shape - 1.0).powi(2) * (self.shape - 2.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mean: f64,
    pub variance: f64,
}

impl NormalPrior {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        normal_ln_pdf(x, self.mean, self.variance)
    }
}

pub(crate) fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (x - mean).powi(2) / var)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    pub spatial_decay: InverseGamma,
    pub ar_decay: InverseGamma,
    pub tau2: InverseGamma,
    pub kappa2: InverseGamma,
    pub nu2: InverseGamma,
    pub mu_theta: NormalPrior,
}

impl Default for PriorSpec {
    /// IG(2, 1) for both decays, tau2 and kappa2; IG(3, 2) for nu2; N(0, 50^2) for the coefficient means.
    fn default() -> Self {
        Self {
            spatial_decay: InverseGamma::new(2.0, 1.0),
            ar_decay: InverseGamma::new(2.0, 1.0),
            tau2: InverseGamma::new(2.0, 1.0),
            kappa2: InverseGamma::new(2.0, 1.0),
            nu2: InverseGamma::new(3.0, 2.0),
            mu_theta: NormalPrior {
                mean: 0.0,
                variance: 2500.0,
            },
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        self.spatial_decay.validate("spatial_decay")?;
        self.ar_decay.validate("ar_decay")?;
        self.tau2.validate("tau2")?;
        self.kappa2.validate("kappa2")?;
        self.nu2.validate("nu2")?;
        if !(self.mu_theta.variance > 0.0
            && self.mu_theta.variance.is_finite()
            && self.mu_theta.mean.is_finite())
        {
            return Err(Error::config("mu_theta prior variance must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaps_start_at_zero() {
        assert_eq!(
            GapVector::from_times(&[0.0, 0.5, 2.0]).0,
            vec![0.0, 0.5, 1.5]
        );
        assert!(GapVector::from_times(&[]).0.is_empty());
    }

    #[test]
    fn site_validation() {
        assert!(SiteSeries::observed("a", [0.0, 0.0], vec![0.0, 1.0], vec![1.0, 2.0]).is_ok());
        assert!(SiteSeries::observed("a", [0.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]).is_err());
        assert!(SiteSeries::new(
            "a",
            [0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0],
            vec![false, false]
        )
        .is_err());
        assert!(SiteSeries::observed("a", [f64::NAN, 0.0], vec![0.0], vec![1.0]).is_err());
        // NaN allowed only where masked
        assert!(SiteSeries::new(
            "a",
            [0.0, 0.0],
            vec![0.0, 1.0],
            vec![f64::NAN, 1.0],
            vec![true, false]
        )
        .is_ok());
        assert!(SiteSeries::new(
            "a",
            [0.0, 0.0],
            vec![0.0, 1.0],
            vec![f64::NAN, 1.0],
            vec![false, false]
        )
        .is_err());
    }

    #[test]
    fn default_prior_moments() {
        let p = PriorSpec::default();
        // shape 2: mean 1, no finite variance
        for ig in [p.spatial_decay, p.ar_decay, p.tau2, p.kappa2] {
            assert_eq!(ig.mean(), Some(1.0));
            assert_eq!(ig.variance(), None);
        }
        assert_eq!(p.nu2.mean(), Some(1.0));
        assert_eq!(p.nu2.variance(), Some(1.0));
        assert_eq!(InverseGamma::new(1.0, 1.0).mean(), None);
    }

    #[test]
    fn inverse_gamma_density_integrates_to_one() {
        let ig = InverseGamma::new(3.0, 2.0);
        // midpoint rule on a log grid
        let (lo, hi, n) = (1e-4f64.ln(), 1e4f64.ln(), 200_000);
        let h = (hi - lo) / n as f64;
        let total: f64 = (0..n)
            .map(|k| {
                let u = lo + (k as f64 + 0.5) * h;
                (ig.ln_pdf(u.exp()) + u).exp() * h
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }
}
