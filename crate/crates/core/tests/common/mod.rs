#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sfcurves::basis::{eval_basis_recursive, BasisSpec};
use sfcurves::mcmc::{stream_rng, Problem};
use sfcurves::model::{KernelFactor, KernelFamily, ModelState, PriorSpec, SiteSeries};
use sfcurves::synth::{irregular_times, simulate_model, GapScheme, ModelParams, SiteLayout};

/// Small problem simulated from the model with irregular unit-interval times.
pub fn micro_problem(
    m: usize,
    n: usize,
    degree: usize,
    seed: u64,
    priors: PriorSpec,
) -> (Problem, ModelState) {
    let mut rng = stream_rng(seed, 0);
    let coords: Vec<[f64; 2]> = (0..m)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let layout = SiteLayout {
        ids: (0..m).map(|j| format!("m{j}")).collect(),
        coords,
    };
    let times: Vec<Vec<f64>> = (0..m)
        .map(|_| irregular_times(GapScheme::Uniform01, n, &mut rng))
        .collect();
    let params = ModelParams {
        mu_theta: (0..=degree).map(|r| 1.0 + r as f64).collect(),
        ar_decay: 1.5,
        ..ModelParams::default()
    };
    let basis = BasisSpec::new(degree, 0.0, 1.0).unwrap();
    let rep = simulate_model(&params, &layout, &times, &basis, &mut rng).unwrap();
    let problem = Problem::new(rep.data, basis, priors, KernelFamily::Gaussian).unwrap();
    (problem, rep.truth)
}

/// Random valid state for a problem.
pub fn random_state<R: Rng>(problem: &Problem, rng: &mut R) -> ModelState {
    let (k, m) = (problem.n_basis(), problem.n_sites());
    ModelState {
        theta: DMatrix::from_fn(k, m, |_, _| rng.random_range(-3.0..3.0)),
        mu_theta: (0..k).map(|_| rng.random_range(-2.0..2.0)).collect(),
        delta: problem
            .data
            .iter()
            .map(|s| (0..s.len()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect(),
        tau2: rng.random_range(0.2..2.0),
        nu2: rng.random_range(0.2..2.0),
        kappa2: rng.random_range(0.2..2.0),
        spatial_decay: rng.random_range(0.3..3.0),
        ar_decay: rng.random_range(0.1..3.0),
    }
}

fn ln_normal(x: f64, m: f64, v: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m) * (x - m) / (2.0 * v)
}

fn ln_ig(x: f64, a: f64, b: f64) -> f64 {
    a * b.ln() - statrs::function::gamma::ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

/// Log joint by explicit loops and a dense inverse of the spatial covariance.
/// `jitter` is added to the correlation diagonal, as the library does.
pub fn naive_log_joint(
    data: &[SiteSeries],
    spec: &BasisSpec,
    state: &ModelState,
    priors: &PriorSpec,
    family: KernelFamily,
    jitter: f64,
) -> [f64; 5] {
    let mut lik = 0.0;
    for (j, s) in data.iter().enumerate() {
        for i in 0..s.len() {
            if s.missing[i] {
                continue;
            }
            let b = eval_basis_recursive(spec, s.times[i]).unwrap();
            let mut mean = state.delta[j][i];
            for r in 0..b.len() {
                mean += state.theta[(r, j)] * b[r];
            }
            lik += ln_normal(s.values[i], mean, state.tau2);
        }
    }

    let m = data.len();
    let mut sigma = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            let h = ((data[a].coords[0] - data[b].coords[0]).powi(2)
                + (data[a].coords[1] - data[b].coords[1]).powi(2))
            .sqrt();
            let c = match family {
                KernelFamily::Gaussian => (-(state.spatial_decay * h).powi(2)).exp(),
                KernelFamily::Exponential => (-state.spatial_decay * h).exp(),
            };
            sigma[(a, b)] = state.kappa2 * (c + if a == b { jitter } else { 0.0 });
        }
    }
    let inv = sigma.clone().try_inverse().unwrap();
    let det = sigma.determinant();
    let mut theta_prior = 0.0;
    for r in 0..state.theta.nrows() {
        let mut quad = 0.0;
        for a in 0..m {
            for b in 0..m {
                quad += (state.theta[(r, a)] - state.mu_theta[r])
                    * inv[(a, b)]
                    * (state.theta[(r, b)] - state.mu_theta[r]);
            }
        }
        theta_prior += -0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + det.ln() + quad);
    }

    let mut delta_prior = 0.0;
    for (j, s) in data.iter().enumerate() {
        for i in 0..s.len() {
            let mean = if i == 0 {
                0.0
            } else {
                (-state.ar_decay * (s.times[i] - s.times[i - 1])).exp() * state.delta[j][i - 1]
            };
            delta_prior += ln_normal(state.delta[j][i], mean, state.nu2);
        }
    }

    let mu_prior: f64 = state
        .mu_theta
        .iter()
        .map(|&v| ln_normal(v, priors.mu_theta.mean, priors.mu_theta.variance))
        .sum();
    let ig = |x: f64, p: sfcurves::model::InverseGamma| ln_ig(x, p.shape, p.scale);
    let var_prior = ig(state.spatial_decay, priors.spatial_decay)
        + ig(state.ar_decay, priors.ar_decay)
        + ig(state.tau2, priors.tau2)
        + ig(state.kappa2, priors.kappa2)
        + ig(state.nu2, priors.nu2);
    [lik, theta_prior, delta_prior, mu_prior, var_prior]
}

pub fn factor_jitter(problem: &Problem, decay: f64) -> f64 {
    KernelFactor::new(problem.family, decay, &problem.coords)
        .unwrap()
        .jitter
}

/// Asymptotic Kolmogorov distribution tail with the usual small-sample correction.
pub fn ks_pvalue(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..200 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (
        m,
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0),
    )
}

pub fn column(m: &DMatrix<f64>, j: usize) -> DVector<f64> {
    m.column(j).into_owned()
}

/// Prior with finite fourth moments everywhere, so moment comparisons have finite error.
pub fn geweke_priors() -> PriorSpec {
    let ig = sfcurves::model::InverseGamma::new(6.0, 5.0);
    PriorSpec {
        spatial_decay: ig,
        ar_decay: ig,
        tau2: ig,
        kappa2: ig,
        nu2: ig,
        mu_theta: sfcurves::model::NormalPrior {
            mean: 0.0,
            variance: 1.0,
        },
    }
}

fn draw_ig<R: Rng>(p: sfcurves::model::InverseGamma, rng: &mut R) -> f64 {
    use rand_distr::Distribution;
    1.0 / rand_distr::Gamma::new(p.shape, 1.0 / p.scale)
        .unwrap()
        .sample(rng)
}

/// Parameters from the prior, then data given parameters.
pub fn forward_draw<R: Rng>(problem: &Problem, rng: &mut R) -> (ModelState, Vec<Vec<f64>>) {
    use rand_distr::StandardNormal;
    let pr = problem.priors;
    let (k, m) = (problem.n_basis(), problem.n_sites());
    let spatial_decay = draw_ig(pr.spatial_decay, rng);
    let ar_decay = draw_ig(pr.ar_decay, rng);
    let tau2 = draw_ig(pr.tau2, rng);
    let kappa2 = draw_ig(pr.kappa2, rng);
    let nu2 = draw_ig(pr.nu2, rng);
    let mu_theta: Vec<f64> = (0..k)
        .map(|_| {
            pr.mu_theta.mean + pr.mu_theta.variance.sqrt() * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let l = KernelFactor::new(problem.family, spatial_decay, &problem.coords)
        .unwrap()
        .lower();
    let mut theta = DMatrix::zeros(k, m);
    for r in 0..k {
        let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let dev = &l * z * kappa2.sqrt();
        for j in 0..m {
            theta[(r, j)] = mu_theta[r] + dev[j];
        }
    }
    let delta = problem
        .gaps
        .iter()
        .map(|g| sfcurves::synth::simulate_ar1(g, ar_decay, nu2, rng))
        .collect();
    let state = ModelState {
        theta,
        mu_theta,
        delta,
        tau2,
        nu2,
        kappa2,
        spatial_decay,
        ar_decay,
    };
    let y = data_given_state(problem, &state, rng);
    (state, y)
}

pub fn data_given_state<R: Rng>(
    problem: &Problem,
    state: &ModelState,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    use rand_distr::StandardNormal;
    (0..problem.n_sites())
        .map(|j| {
            state
                .fitted_signal(j, &problem.bases[j])
                .into_iter()
                .map(|v| v + state.tau2.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

pub fn geweke_functionals(s: &ModelState) -> Vec<(&'static str, f64)> {
    vec![
        ("tau2", s.tau2),
        ("nu2", s.nu2),
        ("kappa2", s.kappa2),
        ("spatial_decay", s.spatial_decay),
        ("ar_decay", s.ar_decay),
        ("mu_0", s.mu_theta[0]),
        ("mu_1", s.mu_theta[1]),
        ("theta_0_0", s.theta[(0, 0)]),
        ("theta_1_2", s.theta[(1, 2)]),
        ("delta_0_3", s.delta[0][3]),
    ]
}

/// Forward versus successive-conditional simulation. Returns, for the first and
/// second moment of each functional, `(name, z)` with `z` the difference in units
/// of its combined Monte Carlo standard error.
pub fn geweke_test(
    mode: sfcurves::mcmc::ThetaUpdate,
    n_forward: usize,
    n_successive: usize,
    seed: u64,
) -> Vec<(String, f64)> {
    use sfcurves::mcmc::{Sampler, SamplerConfig};
    use sfcurves::metrics::effective_sample_size;
    let (problem, _) = micro_problem(3, 6, 1, seed, geweke_priors());
    let mut rng = stream_rng(seed, 1);
    let forward: Vec<Vec<f64>> = (0..n_forward)
        .map(|_| {
            geweke_functionals(&forward_draw(&problem, &mut rng).0)
                .into_iter()
                .map(|p| p.1)
                .collect()
        })
        .collect();

    let (start, y) = forward_draw(&problem, &mut rng);
    let mut p = problem.clone();
    p.set_values(&y).unwrap();
    let mut cfg = SamplerConfig::short(n_successive + 1, 0, 1, seed);
    cfg.theta_update = mode;
    cfg.initial_step = 0.8;
    let mut sampler = Sampler::with_state(p, cfg, start).unwrap();
    let mut successive = Vec::with_capacity(n_successive);
    for _ in 0..n_successive {
        sampler.step().unwrap();
        let y = data_given_state(&sampler.problem, &sampler.state, &mut rng);
        sampler.problem.set_values(&y).unwrap();
        successive.push(
            geweke_functionals(&sampler.state)
                .into_iter()
                .map(|p| p.1)
                .collect::<Vec<f64>>(),
        );
    }

    let names: Vec<&str> = geweke_functionals(&sampler.state)
        .into_iter()
        .map(|p| p.0)
        .collect();
    let mut out = Vec::new();
    for (f, name) in names.iter().enumerate() {
        for power in [1, 2] {
            let a: Vec<f64> = forward.iter().map(|v| v[f].powi(power)).collect();
            let b: Vec<f64> = successive.iter().map(|v| v[f].powi(power)).collect();
            let (ma, va) = mean_var(&a);
            let (mb, vb) = mean_var(&b);
            let ess = effective_sample_size(&b).unwrap_or(1.0);
            let se = (va / a.len() as f64 + vb / ess).sqrt();
            out.push((format!("{name}^{power}"), (ma - mb) / se));
        }
    }
    out
}
