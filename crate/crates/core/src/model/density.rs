use nalgebra::DVector;

use super::{
    normal_ln_pdf, GapVector, KernelFactor, KernelFamily, ModelState, PriorSpec, SiteSeries,
};
use crate::basis::BasisMatrix;
use crate::error::{Error, Result};

/// AR coefficient `exp(-ar_decay * gap)`; exactly one for a zero gap.
pub fn ar_coefficient(ar_decay: f64, gap: f64) -> f64 {
    debug_assert!(ar_decay > 0.0 && gap >= 0.0);
    if gap == 0.0 {
        1.0
    } else {
        (-ar_decay * gap).exp()
    }
}

/// Log density of one delta chain under the AR(1) prior.
pub fn ar_log_density(delta: &[f64], gaps: &GapVector, ar_decay: f64, nu2: f64) -> f64 {
    let mut prev = 0.0;
    let mut acc = 0.0;
    for (i, (&d, &g)) in delta.iter().zip(gaps.as_slice()).enumerate() {
        let mean = if i == 0 {
            0.0
        } else {
            ar_coefficient(ar_decay, g) * prev
        };
        acc += normal_ln_pdf(d, mean, nu2);
        prev = d;
    }
    acc
}

/// Joint log density split by term group.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogJoint {
    /// Gaussian likelihood of the unmasked observations.
    pub likelihood: f64,
    /// Multivariate normal density of every coefficient row.
    pub theta_prior: f64,
    /// AR(1) density of every delta chain.
    pub delta_prior: f64,
    /// Normal priors on the coefficient means.
    pub mu_prior: f64,
    /// Inverse gamma priors on both decays and the three variances.
    pub variance_priors: f64,
}

impl LogJoint {
    pub fn total(&self) -> f64 {
        self.likelihood + self.theta_prior + self.delta_prior + self.mu_prior + self.variance_priors
    }
}

pub(crate) fn likelihood_term(
    data: &[SiteSeries],
    bases: &[BasisMatrix],
    state: &ModelState,
) -> f64 {
    let mut acc = 0.0;
    for (j, (site, basis)) in data.iter().zip(bases).enumerate() {
        let signal = state.fitted_signal(j, basis);
        for i in 0..site.len() {
            if !site.missing[i] {
                acc += normal_ln_pdf(site.values[i], signal[i], state.tau2);
            }
        }
    }
    acc
}

pub(crate) fn theta_prior_term(state: &ModelState, factor: &KernelFactor) -> f64 {
    (0..state.n_basis())
        .map(|r| {
            let row = DVector::from_iterator(state.n_sites(), state.theta.row(r).iter().copied());
            factor.mvn_ln_pdf(&row, state.mu_theta[r], state.kappa2)
        })
        .sum()
}

pub(crate) fn delta_prior_term(data: &[SiteSeries], state: &ModelState) -> f64 {
    data.iter()
        .zip(&state.delta)
        .map(|(s, d)| ar_log_density(d, &s.gaps(), state.ar_decay, state.nu2))
        .sum()
}

pub(crate) fn variance_prior_term(state: &ModelState, priors: &PriorSpec) -> f64 {
    priors.spatial_decay.ln_pdf(state.spatial_decay)
        + priors.ar_decay.ln_pdf(state.ar_decay)
        + priors.tau2.ln_pdf(state.tau2)
        + priors.kappa2.ln_pdf(state.kappa2)
        + priors.nu2.ln_pdf(state.nu2)
}

/// Log joint density with a pre-factored correlation matrix for the state's spatial decay.
pub fn log_joint_with_factor(
    data: &[SiteSeries],
    bases: &[BasisMatrix],
    state: &ModelState,
    priors: &PriorSpec,
    factor: &KernelFactor,
) -> Result<LogJoint> {
    let terms = LogJoint {
        likelihood: likelihood_term(data, bases, state),
        theta_prior: theta_prior_term(state, factor),
        delta_prior: delta_prior_term(data, state),
        mu_prior: state
            .mu_theta
            .iter()
            .map(|&m| priors.mu_theta.ln_pdf(m))
            .sum(),
        variance_priors: variance_prior_term(state, priors),
    };
    if terms.total().is_nan() {
        return Err(Error::numerical(format!("log joint is NaN ({terms:?})")));
    }
    Ok(terms)
}

/// Exact joint log density of data and parameters.
pub fn log_joint(
    data: &[SiteSeries],
    bases: &[BasisMatrix],
    state: &ModelState,
    priors: &PriorSpec,
    family: KernelFamily,
) -> Result<LogJoint> {
    state.validate(data)?;
    if bases.len() != data.len() {
        return Err(Error::input("one basis matrix per site required"));
    }
    let coords: Vec<_> = data.iter().map(|s| s.coords).collect();
    let factor = KernelFactor::new(family, state.spatial_decay, &coords)?;
    log_joint_with_factor(data, bases, state, priors, &factor)
}
