use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sfcurves::config::{RunConfig, Study, TargetTimes};
use sfcurves::io::{
    load_curves, load_dataset, load_draws, load_predictions, load_targets, read_json, write_curves,
    write_dataset, write_draws, write_held_out, write_json, write_metrics, write_predictions,
    DiagnosticEntry, FitManifest, MetricRow,
};
use sfcurves::mcmc::{impute_missing, run_chain, Problem};
use sfcurves::metrics::{chain_diagnostics, ise_on_grid};
use sfcurves::pm10::{load_raw_hourly, preprocess_pm10, synthetic_year, write_raw_hourly};
use sfcurves::predict::{fitted_curves, predict_curves, PredictionRequest, PredictionTarget};
use sfcurves::report::{exceedance, flag_sites};
use sfcurves::synth::{apply_missing_mask, generate_study1, generate_study2, SiteLayout};
use sfcurves::{Error, Result};

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn required(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| configured.clone()).ok_or_else(|| {
        Error::config(format!(
            "no {what} given: pass the flag or set it under `paths`"
        ))
    })
}

pub fn config_init(out: &Path) -> Result<()> {
    let path = out.join("config.json");
    write_json(&path, &RunConfig::default())?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct ModelTruth {
    theta: Vec<Vec<f64>>,
    mu_theta: Vec<f64>,
    tau2: f64,
    nu2: f64,
    kappa2: f64,
    spatial_decay: f64,
    ar_decay: f64,
}

#[derive(Serialize)]
struct FourierTruth {
    beta: Vec<Vec<f64>>,
    omega: f64,
    noise_variance: f64,
}

#[derive(Serialize)]
struct SiteRow {
    site_id: String,
    x: f64,
    y_coord: f64,
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sim = &cfg.simulate;
    let plan = sim.plan(cfg.seed);
    write_rows(
        &out.join("sites.csv"),
        &plan
            .layout
            .ids
            .iter()
            .zip(&plan.layout.coords)
            .map(|(id, c)| SiteRow {
                site_id: id.clone(),
                x: c[0],
                y_coord: c[1],
            })
            .collect::<Vec<_>>(),
    )?;
    (0..sim.replicates)
        .into_par_iter()
        .try_for_each(|r| -> Result<()> {
            let dir = out.join(format!("rep_{r:03}"));
            let (data, truth_values) = match sim.study {
                Study::Model => {
                    let rep = generate_study1(&plan, sim.gap_scheme, &sim.model, r)?;
                    let t = &rep.truth;
                    let truth = ModelTruth {
                        theta: t
                            .theta
                            .row_iter()
                            .map(|r| r.iter().copied().collect())
                            .collect(),
                        mu_theta: t.mu_theta.clone(),
                        tau2: t.tau2,
                        nu2: t.nu2,
                        kappa2: t.kappa2,
                        spatial_decay: t.spatial_decay,
                        ar_decay: t.ar_decay,
                    };
                    write_json(&dir.join("truth.json"), &truth)?;
                    (rep.data, rep.signal)
                }
                Study::Fourier => {
                    let rep = generate_study2(&plan, sim.gap_scheme, &sim.fourier, r)?;
                    let truth = FourierTruth {
                        beta: rep
                            .target
                            .beta
                            .row_iter()
                            .map(|r| r.iter().copied().collect())
                            .collect(),
                        omega: rep.target.omega,
                        noise_variance: rep.target.noise_variance,
                    };
                    write_json(&dir.join("truth.json"), &truth)?;
                    (rep.data, rep.truth)
                }
            };
            let ids: Vec<String> = data.iter().map(|s| s.site_id.clone()).collect();
            let times: Vec<Vec<f64>> = data.iter().map(|s| s.times.clone()).collect();
            write_curves(&dir.join("truth_curves.csv"), &ids, &times, &truth_values)?;
            if sim.mask_count > 0 {
                let (masked, held) = apply_missing_mask(&data, sim.mask_count, sim.mask_seed)?;
                write_dataset(&dir.join("data.csv"), &masked.sites)?;
                write_held_out(&dir.join("held_out.csv"), &held)?;
            } else {
                write_dataset(&dir.join("data.csv"), &data)?;
            }
            Ok(())
        })
}

#[derive(Serialize)]
struct ImputedRow {
    site_id: String,
    t: f64,
    mean: f64,
    hpd_lo: f64,
    hpd_hi: f64,
}

pub fn fit(cfg: &RunConfig, data: Option<PathBuf>, out: &Path) -> Result<()> {
    let path = required(data, &cfg.paths.data, "dataset")?;
    let data = load_dataset(&path)?;
    let counts = &cfg.basis.counts;
    counts.par_iter().try_for_each(|&k| -> Result<()> {
        let dir = if counts.len() == 1 {
            out.to_path_buf()
        } else {
            out.join(format!("bases_{k}"))
        };
        let basis = cfg.basis.spec(k, &data)?;
        let problem = Problem::new(data.clone(), basis, cfg.priors, cfg.sampler.kernel)?;
        let mut sampler = cfg.sampler.clone();
        sampler.seed = cfg.seed;
        let start = Instant::now();
        let draws = run_chain(&problem, &sampler)?;
        let wall_seconds = start.elapsed().as_secs_f64();
        let ids: Vec<String> = problem.data.iter().map(|s| s.site_id.clone()).collect();
        write_draws(&dir.join("draws.csv"), &draws, &ids)?;
        write_predictions(
            &dir.join("fitted.csv"),
            &fitted_curves(&problem, &draws, cfg.predict.mass)?,
        )?;
        let imputed = impute_missing(&problem, &draws, cfg.seed);
        if !imputed.is_empty() {
            let rows = imputed
                .iter()
                .map(|p| {
                    let s = p.summary(cfg.predict.mass)?;
                    Ok(ImputedRow {
                        site_id: p.site_id.clone(),
                        t: p.t,
                        mean: s.mean,
                        hpd_lo: s.hpd_lo.min(s.mean),
                        hpd_hi: s.hpd_hi.max(s.mean),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_rows(&dir.join("imputed.csv"), &rows)?;
        }
        let diagnostics = draws
            .scalar_traces()
            .into_iter()
            .map(|(name, trace)| {
                let d = chain_diagnostics(&trace).ok().filter(|d| !d.degenerate);
                DiagnosticEntry {
                    parameter: name,
                    ess: d.as_ref().map(|d| d.ess),
                    geweke_z: d.as_ref().map(|d| d.geweke_z).filter(|z| z.is_finite()),
                }
            })
            .collect();
        let manifest = FitManifest {
            seed: cfg.seed,
            sampler,
            priors: cfg.priors,
            basis,
            family: problem.family,
            site_ids: ids,
            coords: problem.coords.clone(),
            retained: draws.len(),
            acceptance: draws.acceptance,
            diagnostics,
            wall_seconds,
        };
        write_json(&dir.join("manifest.json"), &manifest)
    })
}

#[derive(Serialize)]
struct PredictionSidecar<'a> {
    seed: u64,
    basis: sfcurves::basis::BasisSpec,
    family: sfcurves::model::KernelFamily,
    draws: usize,
    include_delta: bool,
    include_obs_noise: bool,
    mass: f64,
    targets: &'a [PredictionTarget],
}

pub fn predict(
    cfg: &RunConfig,
    fit: &Path,
    targets: Option<PathBuf>,
    data: Option<PathBuf>,
    out: &Path,
) -> Result<()> {
    let manifest: FitManifest = read_json(&fit.join("manifest.json"))?;
    let draws = load_draws(
        &fit.join("draws.csv"),
        manifest.basis.len(),
        &manifest.site_ids,
        manifest.sampler.clone(),
    )?;
    let raw_targets = load_targets(&required(targets, &cfg.paths.targets, "target file")?)?;
    let observed = match cfg.predict.target_times {
        TargetTimes::NearestSite if raw_targets.iter().any(|t| t.2.is_empty()) => load_dataset(
            &required(data, &cfg.paths.data, "dataset (nearest-site target times)")?,
        )?,
        _ => Vec::new(),
    };
    let targets = raw_targets
        .into_iter()
        .map(|(site_id, coords, times)| {
            let times = if times.is_empty() {
                cfg.predict
                    .target_times
                    .times(&manifest.basis, coords, &observed)?
            } else {
                times
            };
            Ok(PredictionTarget {
                site_id,
                coords,
                times,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let request = PredictionRequest {
        targets,
        include_delta: cfg.predict.include_delta,
        include_obs_noise: cfg.predict.include_obs_noise,
        mass: cfg.predict.mass,
        keep_draws: false,
    };
    let curves = predict_curves(
        &draws,
        &manifest.coords,
        manifest.family,
        &manifest.basis,
        &request,
        cfg.seed,
    )?;
    write_predictions(&out.join("predictions.csv"), &curves)?;
    write_json(
        &out.join("predictions.json"),
        &PredictionSidecar {
            seed: cfg.seed,
            basis: manifest.basis,
            family: manifest.family,
            draws: draws.len(),
            include_delta: request.include_delta,
            include_obs_noise: request.include_obs_noise,
            mass: request.mass,
            targets: &request.targets,
        },
    )
}

pub fn report(
    cfg: &RunConfig,
    predictions: &Path,
    truth: Option<PathBuf>,
    out: &Path,
) -> Result<()> {
    let curves = load_predictions(predictions)?;
    write_rows(
        &out.join("exceedance.csv"),
        &exceedance(&curves, &cfg.thresholds)?,
    )?;
    write_rows(
        &out.join("flags.csv"),
        &flag_sites(&curves, &cfg.thresholds)?,
    )?;
    write_predictions(&out.join("bands.csv"), &curves)?;
    let mut metrics = Vec::new();
    for c in &curves {
        let width = c
            .hpd_hi
            .iter()
            .zip(&c.hpd_lo)
            .map(|(h, l)| h - l)
            .sum::<f64>()
            / c.times.len() as f64;
        metrics.push(MetricRow {
            replicate: 0,
            site_id: c.site_id.clone(),
            metric: "mean_hpd_width".into(),
            value: width,
        });
    }
    if let Some(path) = truth {
        let truth = load_curves(&path)?;
        for c in &curves {
            let Some(t) = truth.iter().find(|t| t.site_id == c.site_id) else {
                continue;
            };
            if t.t.len() != c.times.len()
                || t.t
                    .iter()
                    .zip(&c.times)
                    .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + b.abs()))
            {
                return Err(Error::input(format!(
                    "truth for site {} is on a different time grid",
                    c.site_id
                )));
            }
            let v = ise_on_grid(&c.times, &c.mean, &t.value)
                .map_err(|e| e.context(format!("site {}", c.site_id)))?;
            metrics.push(MetricRow {
                replicate: 0,
                site_id: c.site_id.clone(),
                metric: "ise".into(),
                value: v,
            });
        }
    }
    write_metrics(&out.join("metrics.csv"), &metrics)
}

#[derive(Serialize)]
struct CountRow {
    site_id: String,
    non_na: usize,
    na: usize,
}

pub fn preprocess(
    cfg: &RunConfig,
    input: Option<PathBuf>,
    synthetic: Option<usize>,
    out: &Path,
) -> Result<()> {
    let raw = match synthetic {
        Some(n) => {
            let side = (1..).find(|s: &usize| s * s > n).expect("finite");
            let layout = SiteLayout::jittered_grid(side, 0.05, cfg.seed);
            let raw: Vec<_> = (0..n)
                .into_par_iter()
                .map(|k| synthetic_year(&layout.ids[k], layout.coords[k], cfg.seed, k as u64))
                .collect();
            write_raw_hourly(&out.join("raw_hourly.csv"), &raw)?;
            raw
        }
        None => load_raw_hourly(&required(input, &cfg.paths.raw_hourly, "hourly input")?)?,
    };
    let pre = preprocess_pm10(&raw, cfg.pm10)?;
    let series: Vec<_> = pre.iter().map(|p| p.series.clone()).collect();
    write_dataset(&out.join("dataset.csv"), &series)?;
    let months: Vec<_> = pre.iter().flat_map(|p| p.months.iter().cloned()).collect();
    write_rows(&out.join("categories.csv"), &months)?;
    let counts: Vec<_> = pre
        .iter()
        .map(|p| CountRow {
            site_id: p.series.site_id.clone(),
            non_na: p.n_valid(),
            na: p.n_missing(),
        })
        .collect();
    write_rows(&out.join("counts.csv"), &counts)
}
