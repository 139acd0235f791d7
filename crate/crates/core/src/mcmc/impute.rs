use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{stream_rng, PosteriorDraws, Problem};
use crate::error::Result;
use crate::metrics::{summarize, DrawSummary};

/// Posterior predictive draws of one masked observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedPoint {
    pub site_id: String,
    pub site: usize,
    pub index: usize,
    pub t: f64,
    pub draws: Vec<f64>,
}

impl ImputedPoint {
    pub fn summary(&self, mass: f64) -> Result<DrawSummary> {
        summarize(&self.draws, mass)
    }
}

/// `y* ~ N(sum_r theta_rj b_r(t_ij) + delta_ij, tau2)` for every retained draw and masked point.
///
/// Each retained draw uses its own stream of `seed`, so the output is reproducible
/// and unaffected by how many draws precede it.
pub fn impute_missing(problem: &Problem, draws: &PosteriorDraws, seed: u64) -> Vec<ImputedPoint> {
    let mut out = Vec::new();
    for (j, site) in problem.data.iter().enumerate() {
        for i in (0..site.len()).filter(|&i| site.missing[i]) {
            out.push(ImputedPoint {
                site_id: site.site_id.clone(),
                site: j,
                index: i,
                t: site.times[i],
                draws: Vec::with_capacity(draws.len()),
            });
        }
    }
    for (d, state) in draws.states.iter().enumerate() {
        let mut rng = stream_rng(seed, (1 << 32) + d as u64);
        let signals: Vec<Vec<f64>> = (0..problem.n_sites())
            .map(|j| state.fitted_signal(j, &problem.bases[j]))
            .collect();
        let sd = state.tau2.sqrt();
        for p in &mut out {
            let z: f64 = rng.sample(StandardNormal);
            p.draws.push(signals[p.site][p.index] + sd * z);
        }
    }
    out
}
