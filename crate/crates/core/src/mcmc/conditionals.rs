//! Full conditional distributions and the single-block updates built on them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{Problem, ThetaUpdate};
use crate::error::{Error, Result};
use crate::model::{ar_coefficient, ar_log_density, InverseGamma, KernelFactor, ModelState};
use crate::tridiag::SymTridiagonal;

/// Gaussian in mean/precision form.
#[derive(Debug, Clone)]
pub struct GaussianConditional {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
}

impl GaussianConditional {
    /// Builds the distribution from its precision and canonical vector `h = Q mean`.
    pub fn from_canonical(precision: DMatrix<f64>, h: &DVector<f64>, what: &str) -> Result<Self> {
        let chol = precision.clone().cholesky().ok_or_else(|| {
            Error::numerical(format!(
                "{what}: conditional precision is not positive definite"
            ))
        })?;
        let mean = chol.solve(h);
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "{what}: non-finite conditional mean"
            )));
        }
        Ok(Self {
            mean,
            precision,
            chol_lower: chol.unpack(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let inv_l = self
            .chol_lower
            .clone()
            .try_inverse()
            .expect("triangular factor with positive diagonal is invertible");
        inv_l.tr_mul(&inv_l)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
        let offset = self
            .chol_lower
            .tr_solve_lower_triangular(&z)
            .expect("triangular factor with positive diagonal");
        &self.mean + offset
    }
}

pub(crate) fn sample_inverse_gamma<R: Rng + ?Sized>(ig: &InverseGamma, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(ig.shape, 1.0 / ig.scale).map_err(|e| {
        Error::numerical(format!(
            "invalid inverse gamma ({}, {}): {e}",
            ig.shape, ig.scale
        ))
    })?;
    let x = 1.0 / g.sample(rng);
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::numerical(format!(
            "inverse gamma draw {x} not positive and finite"
        )));
    }
    Ok(x)
}

fn ar_coefficients(problem: &Problem, j: usize, ar_decay: f64) -> Vec<f64> {
    problem.gaps[j]
        .as_slice()
        .iter()
        .map(|&g| ar_coefficient(ar_decay, g))
        .collect()
}

/// Tridiagonal `Lambda_j + W_j / tau2` shared by the delta and collapsed coefficient conditionals.
fn delta_precision(problem: &Problem, state: &ModelState, j: usize) -> SymTridiagonal {
    let coef = ar_coefficients(problem, j, state.ar_decay);
    let mut q = SymTridiagonal::ar1_precision(&coef, state.nu2);
    let lik: Vec<f64> = problem.weights[j].iter().map(|w| w / state.tau2).collect();
    q.add_diagonal(&lik);
    q
}

/// Likelihood contribution of one site to the coefficient precision and canonical vector.
fn site_block(
    problem: &Problem,
    state: &ModelState,
    j: usize,
    collapse_delta: bool,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let tau2 = state.tau2;
    let b = &problem.bases[j].values;
    if !collapse_delta {
        let wd = DVector::from_iterator(
            b.nrows(),
            problem.weights[j]
                .iter()
                .zip(&state.delta[j])
                .map(|(w, d)| w * d),
        );
        let h = (&problem.cross[j] - b.tr_mul(&wd)) / tau2;
        return Ok((&problem.gram[j] / tau2, h));
    }
    // V^-1 = W/tau2 - W M^-1 W / tau2^2 with M = Lambda + W/tau2
    let chol = delta_precision(problem, state, j).cholesky()?;
    let w = &problem.weights[j];
    let k = b.ncols();
    let mut solved = DMatrix::zeros(b.nrows(), k);
    for r in 0..k {
        let col: Vec<f64> = (0..b.nrows()).map(|i| w[i] * b[(i, r)]).collect();
        let s = chol.solve(&col);
        for i in 0..b.nrows() {
            solved[(i, r)] = w[i] * s[i];
        }
    }
    let y = problem.masked_values(j);
    let sy = DVector::from_vec(chol.solve(y.as_slice()));
    let wsy = DVector::from_iterator(sy.len(), sy.iter().zip(w).map(|(a, b)| a * b));
    let tau4 = tau2 * tau2;
    let correction = b.tr_mul(&solved);
    let mut g = &problem.gram[j] / tau2 - correction / tau4;
    g = (&g + g.transpose()) * 0.5;
    let h = &problem.cross[j] / tau2 - b.tr_mul(&wsy) / tau4;
    Ok((g, h))
}

/// Joint conditional of all coefficients, stacked as `index = r * m + j`.
///
/// With `collapse_delta` the delta chains are integrated out, otherwise the
/// state's current delta is conditioned on.
pub fn theta_conditional(
    problem: &Problem,
    state: &ModelState,
    factor: &KernelFactor,
    collapse_delta: bool,
) -> Result<GaussianConditional> {
    let (k, m) = (problem.n_basis(), problem.n_sites());
    let dim = k * m;
    let prior_prec = factor.inverse() / state.kappa2;
    let prior_shift = factor.ones_solved() / state.kappa2;
    let mut q = DMatrix::zeros(dim, dim);
    let mut h = DVector::zeros(dim);
    for r in 0..k {
        q.view_mut((r * m, r * m), (m, m)).copy_from(&prior_prec);
        h.rows_mut(r * m, m)
            .axpy(state.mu_theta[r], &prior_shift, 0.0);
    }
    for j in 0..m {
        let (g, hj) = site_block(problem, state, j, collapse_delta)?;
        for r in 0..k {
            h[r * m + j] += hj[r];
            for s in 0..k {
                q[(r * m + j, s * m + j)] += g[(r, s)];
            }
        }
    }
    GaussianConditional::from_canonical(q, &h, "theta")
}

/// Conditional of coefficient row `r` given every other row and delta.
pub fn theta_row_conditional(
    problem: &Problem,
    state: &ModelState,
    factor: &KernelFactor,
    r: usize,
) -> Result<GaussianConditional> {
    let m = problem.n_sites();
    let mut q = factor.inverse() / state.kappa2;
    let mut h = factor.ones_solved() * (state.mu_theta[r] / state.kappa2);
    for j in 0..m {
        let b = &problem.bases[j].values;
        let site = &problem.data[j];
        let (mut prec, mut lin) = (0.0, 0.0);
        for i in 0..site.len() {
            if site.missing[i] {
                continue;
            }
            let mut others = 0.0;
            for s in 0..b.ncols() {
                if s != r {
                    others += b[(i, s)] * state.theta[(s, j)];
                }
            }
            prec += b[(i, r)] * b[(i, r)];
            lin += b[(i, r)] * (site.values[i] - state.delta[j][i] - others);
        }
        q[(j, j)] += prec / state.tau2;
        h[j] += lin / state.tau2;
    }
    GaussianConditional::from_canonical(q, &h, &format!("theta row {r}"))
}

pub fn update_theta<R: Rng + ?Sized>(
    problem: &Problem,
    state: &mut ModelState,
    factor: &KernelFactor,
    mode: ThetaUpdate,
    rng: &mut R,
) -> Result<()> {
    let (k, m) = (problem.n_basis(), problem.n_sites());
    match mode {
        ThetaUpdate::PerCoefficient => {
            for r in 0..k {
                let draw = theta_row_conditional(problem, state, factor, r)?.sample(rng);
                for j in 0..m {
                    state.theta[(r, j)] = draw[j];
                }
            }
        }
        ThetaUpdate::Joint | ThetaUpdate::Collapsed => {
            let collapse = mode == ThetaUpdate::Collapsed;
            let draw = theta_conditional(problem, state, factor, collapse)?.sample(rng);
            for r in 0..k {
                for j in 0..m {
                    state.theta[(r, j)] = draw[r * m + j];
                }
            }
        }
    }
    Ok(())
}

/// Precision and canonical vector of site `j`'s delta chain.
pub fn delta_conditional(
    problem: &Problem,
    state: &ModelState,
    j: usize,
) -> (SymTridiagonal, Vec<f64>) {
    let q = delta_precision(problem, state, j);
    let mean = state.fitted_mean(j, &problem.bases[j]);
    let site = &problem.data[j];
    let h = (0..site.len())
        .map(|i| {
            if site.missing[i] {
                0.0
            } else {
                (site.values[i] - mean[i]) / state.tau2
            }
        })
        .collect();
    (q, h)
}

pub fn update_delta<R: Rng + ?Sized>(
    problem: &Problem,
    state: &mut ModelState,
    rng: &mut R,
) -> Result<()> {
    for j in 0..problem.n_sites() {
        let (q, h) = delta_conditional(problem, state, j);
        let chol = q.cholesky().map_err(|e| {
            Error::numerical(format!(
                "delta chain of site {}: {e}",
                problem.data[j].site_id
            ))
        })?;
        state.delta[j] = chol.sample_canonical(&h, rng);
    }
    Ok(())
}

/// Conditional mean and variance of the mean of coefficient row `r`.
pub fn mu_conditional(
    problem: &Problem,
    state: &ModelState,
    factor: &KernelFactor,
    r: usize,
) -> (f64, f64) {
    let prior = problem.priors.mu_theta;
    let row = DVector::from_iterator(state.n_sites(), state.theta.row(r).iter().copied());
    let precision = 1.0 / prior.variance + factor.ones_quad() / state.kappa2;
    let lin = prior.mean / prior.variance + factor.ones_solved().dot(&row) / state.kappa2;
    (lin / precision, 1.0 / precision)
}

pub fn update_mu<R: Rng + ?Sized>(
    problem: &Problem,
    state: &mut ModelState,
    factor: &KernelFactor,
    rng: &mut R,
) {
    for r in 0..state.n_basis() {
        let (mean, var) = mu_conditional(problem, state, factor, r);
        state.mu_theta[r] = mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal);
    }
}

pub fn tau2_conditional(problem: &Problem, state: &ModelState) -> InverseGamma {
    let mut ssr = 0.0;
    for (j, site) in problem.data.iter().enumerate() {
        let signal = state.fitted_signal(j, &problem.bases[j]);
        for i in 0..site.len() {
            if !site.missing[i] {
                ssr += (site.values[i] - signal[i]).powi(2);
            }
        }
    }
    let prior = problem.priors.tau2;
    InverseGamma::new(
        prior.shape + problem.n_observed() as f64 / 2.0,
        prior.scale + ssr / 2.0,
    )
}

pub fn update_tau2<R: Rng + ?Sized>(
    problem: &Problem,
    state: &mut ModelState,
    rng: &mut R,
) -> Result<()> {
    state.tau2 = sample_inverse_gamma(&tau2_conditional(problem, state), rng)?;
    Ok(())
}

pub fn nu2_conditional(problem: &Problem, state: &ModelState) -> InverseGamma {
    let mut ss = 0.0;
    for (j, d) in state.delta.iter().enumerate() {
        let coef = ar_coefficients(problem, j, state.ar_decay);
        for i in 0..d.len() {
            let prev = if i == 0 { 0.0 } else { coef[i] * d[i - 1] };
            ss += (d[i] - prev).powi(2);
        }
    }
    let prior = problem.priors.nu2;
    InverseGamma::new(
        prior.shape + problem.n_points() as f64 / 2.0,
        prior.scale + ss / 2.0,
    )
}

pub fn update_nu2<R: Rng + ?Sized>(
    problem: &Problem,
    state: &mut ModelState,
    rng: &mut R,
) -> Result<()> {
    state.nu2 = sample_inverse_gamma(&nu2_conditional(problem, state), rng)?;
    Ok(())
}

pub fn kappa2_conditional(
    problem: &Problem,
    state: &ModelState,
    factor: &KernelFactor,
) -> InverseGamma {
    let m = state.n_sites();
    let quad: f64 = (0..state.n_basis())
        .map(|r| {
            let centered =
                DVector::from_iterator(m, state.theta.row(r).iter().map(|v| v - state.mu_theta[r]));
            factor.quad_form(&centered)
        })
        .sum();
    let prior = problem.priors.kappa2;
    InverseGamma::new(
        prior.shape + (m * state.n_basis()) as f64 / 2.0,
        prior.scale + quad / 2.0,
    )
}

pub fn update_kappa2<R: Rng + ?Sized>(
    problem: &Problem,
    state: &mut ModelState,
    factor: &KernelFactor,
    rng: &mut R,
) -> Result<()> {
    state.kappa2 = sample_inverse_gamma(&kappa2_conditional(problem, state, factor), rng)?;
    Ok(())
}

/// Conjugate block in scan order: coefficient means, `tau2`, `nu2` (only with delta), `kappa2`.
pub fn update_variances<R: Rng + ?Sized>(
    problem: &Problem,
    state: &mut ModelState,
    factor: &KernelFactor,
    include_delta: bool,
    rng: &mut R,
) -> Result<()> {
    update_mu(problem, state, factor, rng);
    update_tau2(problem, state, rng)?;
    if include_delta {
        update_nu2(problem, state, rng)?;
    }
    update_kappa2(problem, state, factor, rng)
}

/// Unnormalized log conditional of the spatial decay (no Jacobian), with the
/// factor it was computed from. `None` when the correlation matrix cannot be factored.
pub fn spatial_decay_log_target(
    problem: &Problem,
    state: &ModelState,
    decay: f64,
) -> Option<(f64, KernelFactor)> {
    let factor = KernelFactor::new(problem.family, decay, &problem.coords).ok()?;
    let lp =
        crate::model::theta_prior_term(state, &factor) + problem.priors.spatial_decay.ln_pdf(decay);
    lp.is_finite().then_some((lp, factor))
}

/// Unnormalized log conditional of the AR decay (no Jacobian).
pub fn ar_decay_log_target(problem: &Problem, state: &ModelState, decay: f64) -> f64 {
    let ar: f64 = state
        .delta
        .iter()
        .zip(&problem.gaps)
        .map(|(d, g)| ar_log_density(d, g, decay, state.nu2))
        .sum();
    ar + problem.priors.ar_decay.ln_pdf(decay)
}

/// Random-walk Metropolis step on `log(spatial_decay)`. Returns whether the move was accepted.
pub fn update_spatial_decay<R: Rng + ?Sized>(
    problem: &Problem,
    state: &mut ModelState,
    factor: &mut KernelFactor,
    step: f64,
    rng: &mut R,
) -> bool {
    let current = state.spatial_decay;
    let proposal = current * (step * rng.sample::<f64, _>(StandardNormal)).exp();
    let u: f64 = rng.random();
    let Some((lp_new, new_factor)) = spatial_decay_log_target(problem, state, proposal) else {
        return false;
    };
    let lp_old = crate::model::theta_prior_term(state, factor)
        + problem.priors.spatial_decay.ln_pdf(current);
    let log_ratio = lp_new - lp_old + proposal.ln() - current.ln();
    if u.ln() < log_ratio {
        state.spatial_decay = proposal;
        *factor = new_factor;
        true
    } else {
        false
    }
}

/// Random-walk Metropolis step on `log(ar_decay)`. Returns whether the move was accepted.
pub fn update_ar_decay<R: Rng + ?Sized>(
    problem: &Problem,
    state: &mut ModelState,
    step: f64,
    rng: &mut R,
) -> bool {
    let current = state.ar_decay;
    let proposal = current * (step * rng.sample::<f64, _>(StandardNormal)).exp();
    let u: f64 = rng.random();
    if !(proposal > 0.0 && proposal.is_finite()) {
        return false;
    }
    let log_ratio = ar_decay_log_target(problem, state, proposal)
        - ar_decay_log_target(problem, state, current)
        + proposal.ln()
        - current.ln();
    if u.ln() < log_ratio {
        state.ar_decay = proposal;
        true
    } else {
        false
    }
}
