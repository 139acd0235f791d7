//! Synthetic datasets: model-based curves, Fourier curves, gap patterns and missing masks.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{design_matrix, BasisSpec};
use crate::error::{Error, Result};
use crate::mcmc::{stream_rng, ChainRng};
use crate::model::{
    ar_coefficient, Coord, GapVector, KernelFactor, KernelFamily, ModelState, SiteSeries,
};

/// Distribution of the gaps between consecutive time points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "gap")]
pub enum GapScheme {
    Uniform01,
    Beta12,
    Fixed(f64),
}

impl GapScheme {
    /// One strictly positive gap.
    pub fn sample_gap<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            GapScheme::Fixed(g) => g,
            GapScheme::Uniform01 => loop {
                let g: f64 = rng.random();
                if g > 0.0 {
                    return g;
                }
            },
            GapScheme::Beta12 => {
                let beta = Beta::new(1.0, 2.0).expect("valid beta parameters");
                loop {
                    let g = beta.sample(rng);
                    if g > 0.0 {
                        return g;
                    }
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GapScheme::Fixed(g) if !(g > 0.0 && g.is_finite()) => Err(Error::config(format!(
                "fixed gap must be positive, got {g}"
            ))),
            _ => Ok(()),
        }
    }
}

/// `n` increasing times: cumulative gaps rescaled so the curve spans `[0, 1]`.
pub fn irregular_times<R: Rng + ?Sized>(scheme: GapScheme, n: usize, rng: &mut R) -> Vec<f64> {
    match n {
        0 => return Vec::new(),
        1 => return vec![0.0],
        _ => {}
    }
    let mut t = Vec::with_capacity(n);
    t.push(0.0);
    for _ in 1..n {
        let last = *t.last().unwrap();
        t.push(last + scheme.sample_gap(rng));
    }
    let total = t[n - 1];
    for v in &mut t {
        *v /= total;
    }
    t[n - 1] = 1.0;
    t
}

/// Site identifiers and coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteLayout {
    pub ids: Vec<String>,
    pub coords: Vec<Coord>,
}

impl SiteLayout {
    /// `side x side` grid on the unit square minus its top-right corner, each point
    /// jittered uniformly by up to `jitter` in each direction. Sites are numbered
    /// row by row, `s01`, `s02`, ...
    pub fn jittered_grid(side: usize, jitter: f64, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 7);
        let step = if side > 1 {
            1.0 / (side - 1) as f64
        } else {
            0.0
        };
        let mut coords = Vec::new();
        for row in 0..side {
            for col in 0..side {
                if side > 1 && row == side - 1 && col == side - 1 {
                    continue;
                }
                let jx = jitter * (2.0 * rng.random::<f64>() - 1.0);
                let jy = jitter * (2.0 * rng.random::<f64>() - 1.0);
                coords.push([col as f64 * step + jx, row as f64 * step + jy]);
            }
        }
        let ids = (1..=coords.len()).map(|i| format!("s{i:02}")).collect();
        Self { ids, coords }
    }

    /// The 15-site default: 4x4 grid minus a corner, jitter 0.05.
    pub fn default_15(seed: u64) -> Self {
        Self::jittered_grid(4, 0.05, seed)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }
}

/// Monte Carlo replication plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McPlan {
    pub replicates: usize,
    pub layout: SiteLayout,
    pub points_per_curve: usize,
    pub master_seed: u64,
}

impl McPlan {
    pub fn replicate_rng(&self, replicate: usize) -> ChainRng {
        stream_rng(self.master_seed, replicate as u64)
    }

    /// Seed handed to the sampler of one replicate.
    pub fn replicate_seed(&self, replicate: usize) -> u64 {
        self.replicate_rng(replicate).random()
    }
}

/// Generating values of the basis-coefficient model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub mu_theta: Vec<f64>,
    pub kappa2: f64,
    pub spatial_decay: f64,
    pub ar_decay: f64,
    pub nu2: f64,
    pub tau2: f64,
    pub family: KernelFamily,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            mu_theta: vec![3.0, 29.0, 15.0, 7.0],
            kappa2: 2.0,
            spatial_decay: 1.0,
            ar_decay: 0.2,
            nu2: 0.5,
            tau2: 1.0,
            family: KernelFamily::Gaussian,
        }
    }
}

impl ModelParams {
    pub fn degree(&self) -> usize {
        self.mu_theta.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu_theta.is_empty() {
            return Err(Error::config("mu_theta must have at least one entry"));
        }
        let nonneg = [self.kappa2, self.nu2, self.tau2];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::config("variances must be non-negative"));
        }
        if !(self.spatial_decay > 0.0 && self.ar_decay > 0.0) {
            return Err(Error::config("decays must be positive"));
        }
        Ok(())
    }
}

/// One simulated dataset with the state that generated it.
#[derive(Debug, Clone)]
pub struct ModelReplicate {
    pub data: Vec<SiteSeries>,
    pub truth: ModelState,
    /// Noise-free `X + delta` at each site's times.
    pub signal: Vec<Vec<f64>>,
}

/// Draws `theta_r ~ N(mu_r 1, kappa2 R)` for every basis index.
fn draw_field<R: Rng + ?Sized>(
    means: &[f64],
    variance: f64,
    family: KernelFamily,
    decay: f64,
    coords: &[Coord],
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let m = coords.len();
    let mut out = DMatrix::zeros(means.len(), m);
    let lower = if variance > 0.0 {
        Some(KernelFactor::new(family, decay, coords)?.lower())
    } else {
        None
    };
    for (r, &mu) in means.iter().enumerate() {
        let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        for j in 0..m {
            out[(r, j)] = mu;
        }
        if let Some(l) = &lower {
            let dev = l * z * variance.sqrt();
            for j in 0..m {
                out[(r, j)] += dev[j];
            }
        }
    }
    Ok(out)
}

/// One AR(1) chain over the given gaps.
pub fn simulate_ar1<R: Rng + ?Sized>(
    gaps: &GapVector,
    ar_decay: f64,
    nu2: f64,
    rng: &mut R,
) -> Vec<f64> {
    let sd = nu2.sqrt();
    let mut out = Vec::with_capacity(gaps.0.len());
    let mut prev = 0.0;
    for (i, &g) in gaps.as_slice().iter().enumerate() {
        let mean = if i == 0 {
            0.0
        } else {
            ar_coefficient(ar_decay, g) * prev
        };
        let z: f64 = rng.sample(StandardNormal);
        prev = mean + sd * z;
        out.push(prev);
    }
    out
}

/// Simulates curves from the hierarchical model at the given sites and times.
pub fn simulate_model<R: Rng + ?Sized>(
    params: &ModelParams,
    layout: &SiteLayout,
    times: &[Vec<f64>],
    basis: &BasisSpec,
    rng: &mut R,
) -> Result<ModelReplicate> {
    params.validate()?;
    if basis.len() != params.mu_theta.len() || times.len() != layout.len() {
        return Err(Error::config(
            "basis size, mean vector and site count must agree",
        ));
    }
    let theta = draw_field(
        &params.mu_theta,
        params.kappa2,
        params.family,
        params.spatial_decay,
        &layout.coords,
        rng,
    )?;
    let mut delta = Vec::with_capacity(layout.len());
    let mut signal = Vec::with_capacity(layout.len());
    let mut data = Vec::with_capacity(layout.len());
    let sd = params.tau2.sqrt();
    for (j, t) in times.iter().enumerate() {
        let b = design_matrix(basis, t)?;
        let coef: Vec<f64> = theta.column(j).iter().copied().collect();
        let d = simulate_ar1(&GapVector::from_times(t), params.ar_decay, params.nu2, rng);
        let s: Vec<f64> = b.expand(&coef).iter().zip(&d).map(|(x, d)| x + d).collect();
        let y = s
            .iter()
            .map(|v| v + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        data.push(SiteSeries::observed(
            layout.ids[j].clone(),
            layout.coords[j],
            t.clone(),
            y,
        )?);
        delta.push(d);
        signal.push(s);
    }
    let truth = ModelState {
        theta,
        mu_theta: params.mu_theta.clone(),
        delta,
        tau2: params.tau2,
        nu2: params.nu2,
        kappa2: params.kappa2,
        spatial_decay: params.spatial_decay,
        ar_decay: params.ar_decay,
    };
    Ok(ModelReplicate {
        data,
        truth,
        signal,
    })
}

/// One replicate of the model-based study: fresh gaps per curve, curves from the model.
pub fn generate_study1(
    plan: &McPlan,
    scheme: GapScheme,
    params: &ModelParams,
    replicate: usize,
) -> Result<ModelReplicate> {
    scheme.validate()?;
    let mut rng = plan.replicate_rng(replicate);
    let times: Vec<Vec<f64>> = (0..plan.layout.len())
        .map(|_| irregular_times(scheme, plan.points_per_curve, &mut rng))
        .collect();
    let basis = BasisSpec::new(params.degree(), 0.0, 1.0)?;
    simulate_model(params, &plan.layout, &times, &basis, &mut rng)
}

/// Fourier-curve generating values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FourierParams {
    pub harmonics: usize,
    pub beta_mean: f64,
    pub kernel_variance: f64,
    pub kernel_decay: f64,
    pub family: KernelFamily,
    pub noise_variance: f64,
    /// Period of the fundamental; `None` means the length of the time domain.
    pub period: Option<f64>,
}

impl Default for FourierParams {
    fn default() -> Self {
        Self {
            harmonics: 4,
            beta_mean: 10.0,
            kernel_variance: 2.0,
            kernel_decay: 1.0,
            family: KernelFamily::Exponential,
            noise_variance: 2.0,
            period: None,
        }
    }
}

/// Coefficients `beta_l` (row `l`, column per site) and angular frequency of the Fourier curves.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTarget {
    pub beta: DMatrix<f64>,
    pub omega: f64,
    pub noise_variance: f64,
}

impl FourierTarget {
    /// `beta_0 + sum_l beta_(2l-1) sin(l w t) + beta_(2l) cos(l w t)` for site `j`.
    pub fn eval(&self, j: usize, t: f64) -> f64 {
        let h = (self.beta.nrows() - 1) / 2;
        let mut acc = self.beta[(0, j)];
        for l in 1..=h {
            let a = l as f64 * self.omega * t;
            acc += self.beta[(2 * l - 1, j)] * a.sin() + self.beta[(2 * l, j)] * a.cos();
        }
        acc
    }
}

/// One replicate of the Fourier study.
#[derive(Debug, Clone)]
pub struct FourierReplicate {
    pub data: Vec<SiteSeries>,
    pub target: FourierTarget,
    /// Noise-free curves at each site's times.
    pub truth: Vec<Vec<f64>>,
}

pub fn simulate_fourier<R: Rng + ?Sized>(
    params: &FourierParams,
    layout: &SiteLayout,
    times: &[Vec<f64>],
    rng: &mut R,
) -> Result<FourierReplicate> {
    let (lo, hi) = times
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| {
            (a.min(t), b.max(t))
        });
    let period = params.period.unwrap_or(hi - lo);
    if !(period > 0.0) {
        return Err(Error::config("Fourier period must be positive"));
    }
    let means = vec![params.beta_mean; 2 * params.harmonics + 1];
    let beta = draw_field(
        &means,
        params.kernel_variance,
        params.family,
        params.kernel_decay,
        &layout.coords,
        rng,
    )?;
    let target = FourierTarget {
        beta,
        omega: 2.0 * std::f64::consts::PI / period,
        noise_variance: params.noise_variance,
    };
    let sd = params.noise_variance.sqrt();
    let mut data = Vec::new();
    let mut truth = Vec::new();
    for (j, t) in times.iter().enumerate() {
        let x: Vec<f64> = t.iter().map(|&v| target.eval(j, v)).collect();
        let y = x
            .iter()
            .map(|v| v + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        data.push(SiteSeries::observed(
            layout.ids[j].clone(),
            layout.coords[j],
            t.clone(),
            y,
        )?);
        truth.push(x);
    }
    Ok(FourierReplicate {
        data,
        target,
        truth,
    })
}

pub fn generate_study2(
    plan: &McPlan,
    scheme: GapScheme,
    params: &FourierParams,
    replicate: usize,
) -> Result<FourierReplicate> {
    scheme.validate()?;
    let mut rng = plan.replicate_rng(replicate);
    let times: Vec<Vec<f64>> = (0..plan.layout.len())
        .map(|_| irregular_times(scheme, plan.points_per_curve, &mut rng))
        .collect();
    simulate_fourier(params, &plan.layout, &times, &mut rng)
}

/// Dataset whose masked entries carry no values; safe to hand to a fit.
#[derive(Debug, Clone)]
pub struct MaskedDataset {
    pub sites: Vec<SiteSeries>,
}

/// One held-out observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub site_id: String,
    pub index: usize,
    pub t: f64,
    pub value: f64,
}

/// True values removed by [`apply_missing_mask`], for scoring only.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TruthBundle {
    pub held_out: Vec<HeldOut>,
}

/// Masks `count` currently observed points chosen uniformly without replacement.
/// Masked values are replaced by NaN in the returned dataset.
pub fn apply_missing_mask(
    data: &[SiteSeries],
    count: usize,
    seed: u64,
) -> Result<(MaskedDataset, TruthBundle)> {
    let slots: Vec<(usize, usize)> = data
        .iter()
        .enumerate()
        .flat_map(|(j, s)| {
            (0..s.len())
                .filter(move |&i| !s.missing[i])
                .map(move |i| (j, i))
        })
        .collect();
    if count > slots.len() {
        return Err(Error::input(format!(
            "cannot mask {count} of {} observed points",
            slots.len()
        )));
    }
    let mut rng = stream_rng(seed, 11);
    let mut chosen: Vec<(usize, usize)> = sample(&mut rng, slots.len(), count)
        .into_iter()
        .map(|k| slots[k])
        .collect();
    chosen.sort_unstable();
    let mut sites = data.to_vec();
    let mut held_out = Vec::with_capacity(count);
    for (j, i) in chosen {
        let s = &mut sites[j];
        held_out.push(HeldOut {
            site_id: s.site_id.clone(),
            index: i,
            t: s.times[i],
            value: s.values[i],
        });
        s.missing[i] = true;
        s.values[i] = f64::NAN;
    }
    Ok((MaskedDataset { sites }, TruthBundle { held_out }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_gap_mean() {
        let mut rng = stream_rng(5, 0);
        let n = 10_000;
        let mean = (0..n)
            .map(|_| GapScheme::Beta12.sample_gap(&mut rng))
            .sum::<f64>()
            / n as f64;
        // sd of Beta(1,2) is sqrt(1/18), so 5 standard errors is about 0.012
        assert!((mean - 1.0 / 3.0).abs() < 0.012, "{mean}");
    }

    #[test]
    fn times_span_unit_interval() {
        let mut rng = stream_rng(1, 0);
        for scheme in [
            GapScheme::Uniform01,
            GapScheme::Beta12,
            GapScheme::Fixed(0.3),
        ] {
            let t = irregular_times(scheme, 50, &mut rng);
            assert_eq!((t[0], t[49]), (0.0, 1.0));
            assert!(t.windows(2).all(|w| w[1] > w[0]));
        }
        let t = irregular_times(GapScheme::Fixed(2.0), 5, &mut rng);
        assert_eq!(t, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn default_layout_has_15_sites_in_unit_square() {
        let l = SiteLayout::default_15(3);
        assert_eq!(l.len(), 15);
        assert_eq!(l.ids[0], "s01");
        assert_eq!(l.ids[14], "s15");
        assert!(l
            .coords
            .iter()
            .all(|c| c[0] > -0.06 && c[0] < 1.06 && c[1] > -0.06 && c[1] < 1.06));
        assert_eq!(SiteLayout::default_15(3), l);
    }

    #[test]
    fn degenerate_model_gives_basis_mean() {
        let params = ModelParams {
            kappa2: 0.0,
            nu2: 0.0,
            tau2: 0.0,
            ..ModelParams::default()
        };
        let layout = SiteLayout::jittered_grid(2, 0.0, 0);
        let times = vec![vec![0.0, 0.2, 0.7, 1.0]; layout.len()];
        let basis = BasisSpec::new(3, 0.0, 1.0).unwrap();
        let rep = simulate_model(&params, &layout, &times, &basis, &mut stream_rng(0, 0)).unwrap();
        let b = design_matrix(&basis, &times[0]).unwrap();
        let expected = b.expand(&params.mu_theta);
        for s in &rep.data {
            for (y, e) in s.values.iter().zip(&expected) {
                assert!((y - e).abs() < 1e-12);
            }
        }
        for j in 0..layout.len() {
            for r in 0..4 {
                assert_eq!(rep.truth.theta[(r, j)], params.mu_theta[r]);
            }
        }
    }

    #[test]
    fn noise_free_fourier_and_constant_curve() {
        let params = FourierParams {
            noise_variance: 0.0,
            ..FourierParams::default()
        };
        let layout = SiteLayout::jittered_grid(2, 0.0, 0);
        let times = vec![vec![0.0, 0.3, 0.6, 1.0]; 3];
        let rep = simulate_fourier(&params, &layout, &times, &mut stream_rng(2, 0)).unwrap();
        for (s, x) in rep.data.iter().zip(&rep.truth) {
            assert_eq!(&s.values, x);
        }
        let mut beta = DMatrix::zeros(9, 1);
        beta[(0, 0)] = 4.5;
        let c = FourierTarget {
            beta,
            omega: 2.0,
            noise_variance: 0.0,
        };
        assert!((0..20).all(|i| c.eval(0, i as f64 * 0.1) == 4.5));
    }

    #[test]
    fn fourier_spectrum_has_only_low_harmonics() {
        let layout = SiteLayout::jittered_grid(2, 0.0, 0);
        let n = 512;
        let t: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let params = FourierParams {
            noise_variance: 0.0,
            period: Some(1.0),
            ..FourierParams::default()
        };
        let rep =
            simulate_fourier(&params, &layout, &vec![t.clone(); 3], &mut stream_rng(9, 0)).unwrap();
        let x = &rep.truth[0];
        // naive DFT, one full period on the grid
        let power = |k: usize| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let a = 2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                re += v * a.cos();
                im -= v * a.sin();
            }
            re * re + im * im
        };
        let total: f64 = (0..n / 2).map(power).sum();
        let low: f64 = (0..=4).map(power).sum();
        assert!((total - low) / total < 1e-20, "{}", (total - low) / total);
        assert!(power(4) > 0.0);
    }

    #[test]
    fn mask_counts_and_determinism() {
        let layout = SiteLayout::default_15(0);
        let times = vec![(0..200).map(|i| i as f64 / 199.0).collect::<Vec<_>>(); 15];
        let rep = simulate_fourier(
            &FourierParams::default(),
            &layout,
            &times,
            &mut stream_rng(0, 0),
        )
        .unwrap();
        let (masked, truth) = apply_missing_mask(&rep.data, 750, 42).unwrap();
        let total: usize = masked.sites.iter().map(|s| s.len()).sum();
        let n_masked: usize = masked.sites.iter().map(|s| s.n_missing()).sum();
        assert_eq!((total, n_masked), (3000, 750));
        assert_eq!(n_masked as f64 / total as f64, 0.25);
        assert_eq!(truth.held_out.len(), 750);
        let j = layout.index_of(&truth.held_out[0].site_id).unwrap();
        assert_eq!(
            truth.held_out[0].value,
            rep.data[j].values[truth.held_out[0].index]
        );
        let (again, _) = apply_missing_mask(&rep.data, 750, 42).unwrap();
        assert!(masked
            .sites
            .iter()
            .zip(&again.sites)
            .all(|(a, b)| a.missing == b.missing));
        let (none, t0) = apply_missing_mask(&rep.data, 0, 42).unwrap();
        assert!(t0.held_out.is_empty() && none.sites == rep.data);
        assert!(apply_missing_mask(&rep.data, 3001, 42).is_err());
    }
}
