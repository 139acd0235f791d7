//! Curve prediction at unmonitored sites by kriging the coefficient fields.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{design_matrix, BasisSpec};
use crate::error::{Error, Result};
use crate::mcmc::{stream_rng, PosteriorDraws, Problem};
use crate::metrics::hpd_sorted;
use crate::model::{
    cross_distances, jittered_cholesky, pairwise_distances, Coord, GapVector, KernelFactor,
    KernelFamily, ModelState,
};
use crate::synth::simulate_ar1;

/// Conditional law of the coefficient fields at target sites given one draw.
///
/// Row `r` of `mean` holds the conditional means of `theta_r` at each target; every
/// row shares the covariance `cov`.
#[derive(Debug, Clone)]
pub struct KrigingConditional {
    pub mean: DMatrix<f64>,
    pub cov: DMatrix<f64>,
}

impl KrigingConditional {
    pub fn new(
        state: &ModelState,
        family: KernelFamily,
        observed: &[Coord],
        targets: &[Coord],
    ) -> Result<Self> {
        if observed.len() != state.n_sites() {
            return Err(Error::input(format!(
                "draw has {} sites but {} observed coordinates were given",
                state.n_sites(),
                observed.len()
            )));
        }
        if targets.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::input("target coordinates must be finite"));
        }
        let factor = KernelFactor::new(family, state.spatial_decay, observed)?;
        let r_to =
            cross_distances(targets, observed).map(|h| family.correlation(state.spatial_decay, h));
        let r_tt = pairwise_distances(targets).map(|h| family.correlation(state.spatial_decay, h));
        // W = R_to R_oo^-1, one row per target
        let weights = factor.solve_matrix(&r_to.transpose()).transpose();
        let mut mean = DMatrix::zeros(state.n_basis(), targets.len());
        for r in 0..state.n_basis() {
            let mu = state.mu_theta[r];
            let centered =
                DVector::from_iterator(state.n_sites(), state.theta.row(r).iter().map(|v| v - mu));
            let m = &weights * centered;
            for t in 0..targets.len() {
                mean[(r, t)] = mu + m[t];
            }
        }
        let mut cov = (r_tt - &weights * r_to.transpose()) * state.kappa2;
        cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self { mean, cov })
    }

    /// One joint draw of every coefficient field at the targets, `(p + 1) x targets`.
    pub fn sample<R: Rng + ?Sized>(&self, kappa2: f64, rng: &mut R) -> Result<DMatrix<f64>> {
        let n = self.cov.nrows();
        let (chol, _) = jittered_cholesky(&self.cov, kappa2, "kriging covariance")?;
        let l = chol.l();
        let mut out = self.mean.clone();
        for r in 0..out.nrows() {
            let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let dev = &l * z;
            for t in 0..n {
                out[(r, t)] += dev[t];
            }
        }
        Ok(out)
    }
}

/// Draws the coefficients at `targets` from their kriging conditional for one posterior draw.
pub fn krige_theta<R: Rng + ?Sized>(
    state: &ModelState,
    family: KernelFamily,
    observed: &[Coord],
    targets: &[Coord],
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    KrigingConditional::new(state, family, observed, targets)?.sample(state.kappa2, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTarget {
    pub site_id: String,
    pub coords: Coord,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRequest {
    pub targets: Vec<PredictionTarget>,
    /// Simulate a fresh AR(1) random effect per draw.
    pub include_delta: bool,
    /// Add observation noise per draw.
    pub include_obs_noise: bool,
    pub mass: f64,
    /// Keep every per-draw curve in the output.
    pub keep_draws: bool,
}

impl PredictionRequest {
    pub fn new(targets: Vec<PredictionTarget>) -> Self {
        Self {
            targets,
            include_delta: true,
            include_obs_noise: true,
            mass: 0.95,
            keep_draws: false,
        }
    }

    pub fn denoised(mut self) -> Self {
        self.include_delta = false;
        self.include_obs_noise = false;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedCurve {
    pub site_id: String,
    pub coords: Coord,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub hpd_lo: Vec<f64>,
    pub hpd_hi: Vec<f64>,
    /// `draws[d][i]` when requested.
    pub draws: Option<Vec<Vec<f64>>>,
}

/// Posterior predictive curves at each target.
///
/// Draw `d` uses random stream `d` of `seed`, so results do not depend on the
/// number of threads. Intervals are pointwise HPD, widened in the rare case
/// the mean falls outside the shortest window.
pub fn predict_curves(
    draws: &PosteriorDraws,
    observed: &[Coord],
    family: KernelFamily,
    basis: &BasisSpec,
    request: &PredictionRequest,
    seed: u64,
) -> Result<Vec<PredictedCurve>> {
    if draws.is_empty() {
        return Err(Error::input("no posterior draws"));
    }
    if !(request.mass > 0.0 && request.mass < 1.0) {
        return Err(Error::config("HPD mass must lie in (0, 1)"));
    }
    let mats = request
        .targets
        .iter()
        .map(|t| {
            design_matrix(basis, &t.times).map_err(|e| e.context(format!("target {}", t.site_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let coords: Vec<Coord> = request.targets.iter().map(|t| t.coords).collect();
    let gaps: Vec<GapVector> = request
        .targets
        .iter()
        .map(|t| GapVector::from_times(&t.times))
        .collect();

    let per_draw: Vec<Vec<Vec<f64>>> = draws
        .states
        .par_iter()
        .enumerate()
        .map(|(d, state)| -> Result<Vec<Vec<f64>>> {
            let mut rng = stream_rng(seed, d as u64);
            let theta = krige_theta(state, family, observed, &coords, &mut rng)
                .map_err(|e| e.context(format!("draw {d}")))?;
            let sd = state.tau2.sqrt();
            let mut curves = Vec::with_capacity(coords.len());
            for (k, b) in mats.iter().enumerate() {
                let coef: Vec<f64> = theta.column(k).iter().copied().collect();
                let mut y = b.expand(&coef);
                if request.include_delta {
                    let delta = simulate_ar1(&gaps[k], state.ar_decay, state.nu2, &mut rng);
                    y.iter_mut().zip(delta).for_each(|(v, d)| *v += d);
                }
                if request.include_obs_noise {
                    y.iter_mut()
                        .for_each(|v| *v += sd * rng.sample::<f64, _>(StandardNormal));
                }
                curves.push(y);
            }
            Ok(curves)
        })
        .collect::<Result<_>>()?;

    let n_draws = per_draw.len();
    let mut out = Vec::with_capacity(coords.len());
    for (k, target) in request.targets.iter().enumerate() {
        let n = target.times.len();
        let (mut mean, mut lo, mut hi) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut column = vec![0.0; n_draws];
        for i in 0..n {
            for (d, curves) in per_draw.iter().enumerate() {
                column[d] = curves[k][i];
            }
            mean[i] = column.iter().sum::<f64>() / n_draws as f64;
            column.sort_by(f64::total_cmp);
            let h = hpd_sorted(&column, request.mass);
            lo[i] = h.lower.min(mean[i]);
            hi[i] = h.upper.max(mean[i]);
        }
        let raw = request
            .keep_draws
            .then(|| per_draw.iter().map(|c| c[k].clone()).collect());
        out.push(PredictedCurve {
            site_id: target.site_id.clone(),
            coords: target.coords,
            times: target.times.clone(),
            mean,
            hpd_lo: lo,
            hpd_hi: hi,
            draws: raw,
        });
    }
    Ok(out)
}

/// Posterior summary of `sum_r theta_rj b_r(t) + delta_j(t)` at every site's own
/// time points, masked points included.
pub fn fitted_curves(
    problem: &Problem,
    draws: &PosteriorDraws,
    mass: f64,
) -> Result<Vec<PredictedCurve>> {
    if draws.is_empty() {
        return Err(Error::input("no posterior draws"));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::config("HPD mass must lie in (0, 1)"));
    }
    let mut out = Vec::with_capacity(problem.n_sites());
    for (j, site) in problem.data.iter().enumerate() {
        let per_draw: Vec<Vec<f64>> = draws
            .states
            .iter()
            .map(|s| s.fitted_signal(j, &problem.bases[j]))
            .collect();
        let n = site.len();
        let (mut mean, mut lo, mut hi) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut column = vec![0.0; per_draw.len()];
        for i in 0..n {
            for (d, c) in per_draw.iter().enumerate() {
                column[d] = c[i];
            }
            mean[i] = column.iter().sum::<f64>() / column.len() as f64;
            column.sort_by(f64::total_cmp);
            let h = hpd_sorted(&column, mass);
            lo[i] = h.lower.min(mean[i]);
            hi[i] = h.upper.max(mean[i]);
        }
        out.push(PredictedCurve {
            site_id: site.site_id.clone(),
            coords: site.coords,
            times: site.times.clone(),
            mean,
            hpd_lo: lo,
            hpd_hi: hi,
            draws: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(theta: DMatrix<f64>, mu: Vec<f64>, kappa2: f64, decay: f64) -> ModelState {
        let m = theta.ncols();
        ModelState {
            theta,
            mu_theta: mu,
            delta: vec![vec![0.0]; m],
            tau2: 0.3,
            nu2: 0.2,
            kappa2,
            spatial_decay: decay,
            ar_decay: 0.5,
        }
    }

    #[test]
    fn matches_dense_joint_conditioning() {
        let obs = [[0.0, 0.0], [0.5, 0.1], [0.2, 0.8]];
        let tgt = [[0.3, 0.3]];
        let theta = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.3, 0.7]);
        let s = state(theta.clone(), vec![1.2, 0.1], 1.7, 1.3);
        for fam in [KernelFamily::Gaussian, KernelFamily::Exponential] {
            let k = KrigingConditional::new(&s, fam, &obs, &tgt).unwrap();
            let jitter = KernelFactor::new(fam, 1.3, &obs).unwrap().jitter;
            // joint 4x4 covariance ordered (observed, target), same jitter on the observed block
            let all: Vec<Coord> = obs.iter().chain(&tgt).copied().collect();
            let mut joint = pairwise_distances(&all).map(|h| 1.7 * fam.correlation(1.3, h));
            for i in 0..3 {
                joint[(i, i)] += 1.7 * jitter;
            }
            let soo = joint.view((0, 0), (3, 3)).into_owned();
            let sto = joint.view((3, 0), (1, 3)).into_owned();
            let stt = joint[(3, 3)];
            let l = soo.clone().cholesky().unwrap();
            let w = l.solve(&sto.transpose());
            let cond_var = stt - (&sto * &w)[(0, 0)];
            assert!(
                (k.cov[(0, 0)] - cond_var).abs() < 1e-10,
                "{} vs {cond_var}",
                k.cov[(0, 0)]
            );
            for r in 0..2 {
                let centered =
                    DVector::from_iterator(3, theta.row(r).iter().map(|v| v - s.mu_theta[r]));
                let m = s.mu_theta[r] + (w.transpose() * centered)[0];
                assert!((k.mean[(r, 0)] - m).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn constants_are_reproduced() {
        let obs = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.7, 0.7]];
        let s = state(DMatrix::from_element(3, 4, 2.5), vec![2.5; 3], 1.0, 1.0);
        let k =
            KrigingConditional::new(&s, KernelFamily::Gaussian, &obs, &[[0.4, 0.2], [3.0, -2.0]])
                .unwrap();
        assert!(k.mean.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn far_target_is_unconditional() {
        let obs = [[0.0, 0.0], [0.5, 0.0]];
        let s = state(
            DMatrix::from_row_slice(1, 2, &[4.0, -3.0]),
            vec![1.0],
            2.0,
            1.0,
        );
        let k =
            KrigingConditional::new(&s, KernelFamily::Exponential, &obs, &[[1e4, 0.0]]).unwrap();
        assert!((k.mean[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((k.cov[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_target_reproduces_observed() {
        let obs = [[0.0, 0.0], [0.5, 0.5], [1.0, 0.0]];
        let s = state(
            DMatrix::from_row_slice(1, 3, &[4.0, -3.0, 1.0]),
            vec![0.0],
            2.0,
            1.0,
        );
        let k = KrigingConditional::new(&s, KernelFamily::Gaussian, &obs, &[[0.5, 0.5]]).unwrap();
        assert!((k.mean[(0, 0)] + 3.0).abs() < 1e-6);
        assert!(k.cov[(0, 0)].abs() < 1e-7);
        let mut rng = stream_rng(0, 0);
        let d = k.sample(2.0, &mut rng).unwrap();
        assert!((d[(0, 0)] + 3.0).abs() < 1e-2);
    }
}
