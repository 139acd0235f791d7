use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::conditionals::{
    update_ar_decay, update_delta, update_kappa2, update_mu, update_nu2, update_spatial_decay,
    update_tau2, update_theta,
};
use super::{stream_rng, ChainRng, Problem, SamplerConfig, ThetaUpdate};
use crate::error::{Error, Result};
use crate::model::{log_joint_with_factor, KernelFactor, ModelState};

const RIDGE: f64 = 1e-6;
const ADAPT_EXPONENT: f64 = 0.6;

/// Metropolis counters for the two decay parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub spatial_accepted: usize,
    pub spatial_proposed: usize,
    pub ar_accepted: usize,
    pub ar_proposed: usize,
    /// Step sizes on the log scale in force after burn-in.
    pub spatial_step: f64,
    pub ar_step: f64,
}

impl AcceptanceStats {
    pub fn spatial_rate(&self) -> f64 {
        rate(self.spatial_accepted, self.spatial_proposed)
    }

    pub fn ar_rate(&self) -> f64 {
        rate(self.ar_accepted, self.ar_proposed)
    }
}

fn rate(a: usize, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        a as f64 / n as f64
    }
}

/// Retained states of one chain, in order.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub states: Vec<ModelState>,
    pub log_joint: Vec<f64>,
    /// Counted over the post-burn-in iterations only.
    pub acceptance: AcceptanceStats,
    pub config: SamplerConfig,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Trace of a scalar functional of the state.
    pub fn trace(&self, f: impl Fn(&ModelState) -> f64) -> Vec<f64> {
        self.states.iter().map(f).collect()
    }

    pub fn mean_theta(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.states[0].theta.nrows(), self.states[0].theta.ncols());
        for s in &self.states {
            acc += &s.theta;
        }
        acc / self.len() as f64
    }

    /// Named scalar traces: variances, decays and coefficient means.
    pub fn scalar_traces(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = vec![
            ("tau2".to_string(), self.trace(|s| s.tau2)),
            ("nu2".to_string(), self.trace(|s| s.nu2)),
            ("kappa2".to_string(), self.trace(|s| s.kappa2)),
            ("spatial_decay".to_string(), self.trace(|s| s.spatial_decay)),
            ("ar_decay".to_string(), self.trace(|s| s.ar_decay)),
        ];
        if let Some(first) = self.states.first() {
            for r in 0..first.mu_theta.len() {
                out.push((format!("mu_theta_{r}"), self.trace(|s| s.mu_theta[r])));
            }
        }
        out
    }
}

/// Ridge least-squares coefficients per site, zero delta, unit variances and decays.
pub fn initial_state(problem: &Problem) -> Result<ModelState> {
    let (k, m) = (problem.n_basis(), problem.n_sites());
    let mut theta = DMatrix::zeros(k, m);
    for j in 0..m {
        let mut g = problem.gram[j].clone();
        for r in 0..k {
            g[(r, r)] += RIDGE;
        }
        let sol = g
            .cholesky()
            .ok_or_else(|| {
                Error::numerical(format!(
                    "initial least squares for site {}",
                    problem.data[j].site_id
                ))
            })?
            .solve(&problem.cross[j]);
        theta.set_column(j, &sol);
    }
    let mu_theta = (0..k).map(|r| theta.row(r).mean()).collect();
    Ok(ModelState {
        theta,
        mu_theta,
        delta: problem.data.iter().map(|s| vec![0.0; s.len()]).collect(),
        tau2: 1.0,
        nu2: 1.0,
        kappa2: 1.0,
        spatial_decay: 1.0,
        ar_decay: 1.0,
    })
}

/// Metropolis-within-Gibbs sampler advancing one sweep at a time.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub problem: Problem,
    pub config: SamplerConfig,
    pub state: ModelState,
    pub factor: KernelFactor,
    pub rng: ChainRng,
    pub spatial_step: f64,
    pub ar_step: f64,
    /// Completed sweeps.
    pub iteration: usize,
    pub acceptance: AcceptanceStats,
    batch: [usize; 2],
    batch_count: usize,
}

impl Sampler {
    pub fn new(problem: Problem, config: SamplerConfig) -> Result<Self> {
        let state = initial_state(&problem)?;
        Self::with_state(problem, config, state)
    }

    pub fn with_state(problem: Problem, config: SamplerConfig, state: ModelState) -> Result<Self> {
        config.validate()?;
        state.validate(&problem.data)?;
        let factor = KernelFactor::new(problem.family, state.spatial_decay, &problem.coords)?;
        let mut state = state;
        if !config.include_delta {
            for d in &mut state.delta {
                d.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok(Self {
            rng: stream_rng(config.seed, 0),
            spatial_step: config.initial_step,
            ar_step: config.initial_step,
            problem,
            config,
            state,
            factor,
            iteration: 0,
            acceptance: AcceptanceStats::default(),
            batch: [0; 2],
            batch_count: 0,
        })
    }

    fn theta_mode(&self) -> ThetaUpdate {
        if self.config.include_delta {
            self.config.theta_update
        } else {
            ThetaUpdate::Joint
        }
    }

    /// One full sweep in the fixed scan order.
    pub fn step(&mut self) -> Result<()> {
        let t = self.iteration;
        let ctx = |block: &str| format!("iteration {t}, block {block}");
        let mode = self.theta_mode();
        let p = &self.problem;
        let s = &mut self.state;
        let rng = &mut self.rng;
        update_theta(p, s, &self.factor, mode, rng).map_err(|e| e.context(ctx("theta")))?;
        if self.config.include_delta {
            update_delta(p, s, rng).map_err(|e| e.context(ctx("delta")))?;
        }
        update_mu(p, s, &self.factor, rng);
        update_tau2(p, s, rng).map_err(|e| e.context(ctx("tau2")))?;
        if self.config.include_delta {
            update_nu2(p, s, rng).map_err(|e| e.context(ctx("nu2")))?;
        }
        update_kappa2(p, s, &self.factor, rng).map_err(|e| e.context(ctx("kappa2")))?;
        let acc_spatial = update_spatial_decay(p, s, &mut self.factor, self.spatial_step, rng);
        let acc_ar = if self.config.include_delta {
            Some(update_ar_decay(p, s, self.ar_step, rng))
        } else {
            None
        };

        let burning = t < self.config.burn_in;
        if burning {
            self.batch[0] += acc_spatial as usize;
            self.batch[1] += acc_ar.unwrap_or(false) as usize;
            if (t + 1) % self.config.adapt_window == 0 {
                self.adapt();
            }
        } else {
            self.acceptance.spatial_proposed += 1;
            self.acceptance.spatial_accepted += acc_spatial as usize;
            if let Some(a) = acc_ar {
                self.acceptance.ar_proposed += 1;
                self.acceptance.ar_accepted += a as usize;
            }
        }
        self.iteration += 1;
        Ok(())
    }

    fn adapt(&mut self) {
        self.batch_count += 1;
        let gain = (self.batch_count as f64).powf(-ADAPT_EXPONENT);
        let w = self.config.adapt_window as f64;
        let target = self.config.target_acceptance;
        let adjust = |step: &mut f64, accepted: usize| {
            if *step > 0.0 {
                *step *= (gain * (accepted as f64 / w - target)).exp();
            }
        };
        adjust(&mut self.spatial_step, self.batch[0]);
        if self.config.include_delta {
            adjust(&mut self.ar_step, self.batch[1]);
        }
        self.batch = [0; 2];
    }

    pub fn log_joint(&self) -> Result<f64> {
        let p = &self.problem;
        Ok(log_joint_with_factor(&p.data, &p.bases, &self.state, &p.priors, &self.factor)?.total())
    }

    /// Runs the configured number of sweeps and collects the retained states.
    pub fn run(mut self) -> Result<PosteriorDraws> {
        let cfg = self.config.clone();
        let mut states = Vec::with_capacity(cfg.retained());
        let mut lj = Vec::with_capacity(cfg.retained());
        while self.iteration < cfg.iterations {
            let t = self.iteration;
            self.step()?;
            if t >= cfg.burn_in && (t - cfg.burn_in + 1) % cfg.thin == 0 {
                let value = self
                    .log_joint()
                    .map_err(|e| e.context(format!("iteration {t}, block log_joint")))?;
                if !value.is_finite() {
                    return Err(Error::numerical(format!(
                        "iteration {t}: log joint is {value}"
                    )));
                }
                states.push(self.state.clone());
                lj.push(value);
            }
        }
        self.acceptance.spatial_step = self.spatial_step;
        self.acceptance.ar_step = self.ar_step;
        Ok(PosteriorDraws {
            states,
            log_joint: lj,
            acceptance: self.acceptance,
            config: cfg,
        })
    }
}

/// Fits the model with a fresh sampler started from [`initial_state`].
pub fn run_chain(problem: &Problem, config: &SamplerConfig) -> Result<PosteriorDraws> {
    if problem.n_observed() == 0 {
        return Err(Error::input("dataset has no unmasked observations"));
    }
    Sampler::new(problem.clone(), config.clone())?.run()
}
