//! Metropolis-within-Gibbs posterior sampling.
//!
//! One sweep updates, in order: the coefficient fields, the delta chains, the
//! coefficient means, `tau2`, `nu2`, `kappa2`, then the spatial and AR decays
//! by adaptive random-walk Metropolis on the log scale. Everything except the
//! two decays is an exact conjugate draw.

mod chain;
mod conditionals;
mod config;
mod impute;

pub use chain::{initial_state, run_chain, AcceptanceStats, PosteriorDraws, Sampler};
pub use conditionals::{
    ar_decay_log_target, delta_conditional, kappa2_conditional, mu_conditional, nu2_conditional,
    spatial_decay_log_target, tau2_conditional, theta_conditional, theta_row_conditional,
    update_ar_decay, update_delta, update_kappa2, update_mu, update_nu2, update_spatial_decay,
    update_tau2, update_theta, update_variances, GaussianConditional,
};
pub use config::{SamplerConfig, ThetaUpdate};
pub use impute::{impute_missing, ImputedPoint};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::basis::{BasisMatrix, BasisSpec};
use crate::error::{Error, Result};
use crate::model::{
    canonicalize, design_matrices, Coord, GapVector, KernelFamily, PriorSpec, SiteSeries,
};

/// Seedable generator used for every chain and simulation.
pub type ChainRng = ChaCha8Rng;

/// Independent stream `stream` derived from a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Data plus everything about the model that stays fixed during sampling.
/// Sites are stored sorted by id, so theta column `j` is the `j`-th id in that order.
#[derive(Debug, Clone)]
pub struct Problem {
    pub data: Vec<SiteSeries>,
    pub basis: BasisSpec,
    pub bases: Vec<BasisMatrix>,
    pub coords: Vec<Coord>,
    pub gaps: Vec<GapVector>,
    pub priors: PriorSpec,
    pub family: KernelFamily,
    /// 1.0 where observed, 0.0 where masked.
    pub(crate) weights: Vec<Vec<f64>>,
    /// `B^T W B` per site, `W` the observation mask.
    pub(crate) gram: Vec<DMatrix<f64>>,
    /// `B^T W y` per site.
    pub(crate) cross: Vec<DVector<f64>>,
}

impl Problem {
    pub fn new(
        data: Vec<SiteSeries>,
        basis: BasisSpec,
        priors: PriorSpec,
        family: KernelFamily,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::input("dataset has no sites"));
        }
        let mut data = data;
        canonicalize(&mut data);
        if let Some(w) = data.windows(2).find(|w| w[0].site_id == w[1].site_id) {
            return Err(Error::input(format!("duplicate site id {}", w[0].site_id)));
        }
        for s in &data {
            s.validate()?;
        }
        priors.validate()?;
        let bases = design_matrices(&basis, &data)?;
        let coords = data.iter().map(|s| s.coords).collect();
        let gaps = data.iter().map(|s| s.gaps()).collect();
        let weights: Vec<Vec<f64>> = data
            .iter()
            .map(|s| {
                s.missing
                    .iter()
                    .map(|&m| if m { 0.0 } else { 1.0 })
                    .collect()
            })
            .collect();
        let gram = bases
            .iter()
            .zip(&weights)
            .map(|(b, w)| {
                let wb = weighted_rows(&b.values, w);
                wb.transpose() * &b.values
            })
            .collect();
        let mut p = Self {
            data,
            basis,
            bases,
            coords,
            gaps,
            priors,
            family,
            weights,
            gram,
            cross: Vec::new(),
        };
        p.refresh_cross();
        Ok(p)
    }

    fn refresh_cross(&mut self) {
        self.cross = (0..self.data.len())
            .map(|j| {
                let y = self.masked_values(j);
                self.bases[j].values.tr_mul(&y)
            })
            .collect();
    }

    /// Observed values with zeros at masked positions.
    pub(crate) fn masked_values(&self, j: usize) -> DVector<f64> {
        let s = &self.data[j];
        DVector::from_iterator(
            s.len(),
            (0..s.len()).map(|i| if s.missing[i] { 0.0 } else { s.values[i] }),
        )
    }

    /// Replaces the observed values of every site; shapes and masks stay fixed.
    pub fn set_values(&mut self, values: &[Vec<f64>]) -> Result<()> {
        if values.len() != self.data.len()
            || values
                .iter()
                .zip(&self.data)
                .any(|(v, s)| v.len() != s.len())
        {
            return Err(Error::input(
                "replacement values do not match dataset shape",
            ));
        }
        for (s, v) in self.data.iter_mut().zip(values) {
            s.values.clone_from(v);
        }
        self.refresh_cross();
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.data.len()
    }

    pub fn n_basis(&self) -> usize {
        self.basis.len()
    }

    pub fn n_observed(&self) -> usize {
        self.data.iter().map(|s| s.n_observed()).sum()
    }

    pub fn n_points(&self) -> usize {
        self.data.iter().map(|s| s.len()).sum()
    }
}

fn weighted_rows(m: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, &wi) in w.iter().enumerate() {
        if wi != 1.0 {
            out.row_mut(i).scale_mut(wi);
        }
    }
    out
}
