//! CSV and JSON file formats shared by the library and the command line.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle is exact and identical inputs give byte-identical files.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::mcmc::{AcceptanceStats, PosteriorDraws, SamplerConfig};
use crate::model::{canonicalize, Coord, KernelFamily, ModelState, PriorSpec, SiteSeries};
use crate::predict::PredictedCurve;
use crate::synth::TruthBundle;

pub const DATASET_HEADER: [&str; 6] = ["site_id", "x", "y_coord", "t", "value", "missing"];

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn check_header(
    rdr: &mut csv::Reader<File>,
    want: &[&str],
    path: &Path,
) -> Result<csv::StringRecord> {
    let header = rdr.headers()?.clone();
    for w in want {
        if !header.iter().any(|h| h == *w) {
            return Err(Error::input(format!(
                "{}: missing column `{w}`",
                path.display()
            )));
        }
    }
    Ok(header)
}

fn column(header: &csv::StringRecord, name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .expect("column checked")
}

fn parse_f64(s: &str, what: &str, row: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::input(format!("row {row}: cannot parse {what} `{s}`")))
}

pub fn write_dataset(path: &Path, data: &[SiteSeries]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(DATASET_HEADER)?;
    for s in data {
        for i in 0..s.len() {
            let value = if s.missing[i] {
                String::new()
            } else {
                fmt(s.values[i])
            };
            w.write_record([
                s.site_id.clone(),
                fmt(s.coords[0]),
                fmt(s.coords[1]),
                fmt(s.times[i]),
                value,
                if s.missing[i] { "1".into() } else { "0".into() },
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset CSV. Rows of a site must be contiguous with increasing `t`;
/// sites come back sorted by id. Row numbers in errors count the header as row 1.
pub fn load_dataset(path: &Path) -> Result<Vec<SiteSeries>> {
    let mut rdr = reader(path)?;
    let header = check_header(&mut rdr, &DATASET_HEADER, path)?;
    let idx: Vec<usize> = DATASET_HEADER.iter().map(|c| column(&header, c)).collect();
    let mut sites: Vec<SiteSeries> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::input(format!("row {row}: {e}")))?;
        let get = |c: usize| rec.get(idx[c]).unwrap_or("");
        let id = get(0).to_string();
        if id.is_empty() {
            return Err(Error::input(format!("row {row}: empty site_id")));
        }
        let x = parse_f64(get(1), "x", row)?;
        let y = parse_f64(get(2), "y_coord", row)?;
        let t = parse_f64(get(3), "t", row)?;
        let missing = match get(5) {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::input(format!(
                    "row {row}: missing flag must be 0 or 1, got `{other}`"
                )))
            }
        };
        let value = match (missing, get(4)) {
            (true, _) => f64::NAN,
            (false, "") => {
                return Err(Error::input(format!(
                    "row {row}: empty value on an observed row"
                )))
            }
            (false, v) => parse_f64(v, "value", row)?,
        };
        if ![x, y, t].iter().all(|v| v.is_finite()) || !(missing || value.is_finite()) {
            return Err(Error::input(format!("row {row}: non-finite number")));
        }
        match sites.last_mut() {
            Some(s) if s.site_id == id => {
                if s.coords != [x, y] {
                    return Err(Error::input(format!(
                        "row {row}: coordinates of site {id} change"
                    )));
                }
                if !(t > *s.times.last().expect("non-empty")) {
                    return Err(Error::input(format!(
                        "row {row}: t not increasing within site {id}"
                    )));
                }
                s.times.push(t);
                s.values.push(value);
                s.missing.push(missing);
            }
            _ => {
                if sites.iter().any(|s| s.site_id == id) {
                    return Err(Error::input(format!(
                        "row {row}: rows of site {id} are not contiguous"
                    )));
                }
                sites.push(SiteSeries {
                    site_id: id,
                    coords: [x, y],
                    times: vec![t],
                    values: vec![value],
                    missing: vec![missing],
                });
            }
        }
    }
    if sites.is_empty() {
        return Err(Error::input(format!("{}: no data rows", path.display())));
    }
    canonicalize(&mut sites);
    Ok(sites)
}

/// Curves `site_id,t,value`, used for noise-free truths.
pub fn write_curves(
    path: &Path,
    ids: &[String],
    times: &[Vec<f64>],
    values: &[Vec<f64>],
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["site_id", "t", "value"])?;
    for ((id, t), v) in ids.iter().zip(times).zip(values) {
        for (ti, vi) in t.iter().zip(v) {
            w.write_record([id.clone(), fmt(*ti), fmt(*vi)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One curve per site, in file order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub site_id: String,
    pub t: Vec<f64>,
    pub value: Vec<f64>,
}

pub fn load_curves(path: &Path) -> Result<Vec<Curve>> {
    let mut rdr = reader(path)?;
    let header = check_header(&mut rdr, &["site_id", "t", "value"], path)?;
    let (ci, ct, cv) = (
        column(&header, "site_id"),
        column(&header, "t"),
        column(&header, "value"),
    );
    let mut out: Vec<Curve> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::input(format!("row {row}: {e}")))?;
        let id = rec.get(ci).unwrap_or("").to_string();
        let t = parse_f64(rec.get(ct).unwrap_or(""), "t", row)?;
        let v = parse_f64(rec.get(cv).unwrap_or(""), "value", row)?;
        match out.iter_mut().find(|c| c.site_id == id) {
            Some(c) => {
                c.t.push(t);
                c.value.push(v);
            }
            None => out.push(Curve {
                site_id: id,
                t: vec![t],
                value: vec![v],
            }),
        }
    }
    Ok(out)
}

pub fn write_held_out(path: &Path, truth: &TruthBundle) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["site_id", "index", "t", "value"])?;
    for h in &truth.held_out {
        w.write_record([
            h.site_id.clone(),
            h.index.to_string(),
            fmt(h.t),
            fmt(h.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const SCALARS: [&str; 5] = ["tau2", "nu2", "kappa2", "spatial_decay", "ar_decay"];

/// Retained draws, one row each: `theta_<r>_<site>` for every coefficient, then
/// `mu_theta_<r>`, the five variances and decays, and `log_joint`.
/// The delta chains are not stored.
pub fn write_draws(path: &Path, draws: &PosteriorDraws, site_ids: &[String]) -> Result<()> {
    let mut w = writer(path)?;
    let Some(first) = draws.states.first() else {
        return Err(Error::input("no draws to write"));
    };
    let (k, m) = (first.n_basis(), first.n_sites());
    if site_ids.len() != m {
        return Err(Error::input("site id count differs from theta columns"));
    }
    let mut header = vec!["draw".to_string()];
    for r in 0..k {
        for id in site_ids {
            header.push(format!("theta_{r}_{id}"));
        }
    }
    header.extend((0..k).map(|r| format!("mu_theta_{r}")));
    header.extend(SCALARS.iter().map(|s| s.to_string()));
    header.push("log_joint".into());
    w.write_record(&header)?;
    for (d, s) in draws.states.iter().enumerate() {
        let mut row = vec![d.to_string()];
        for r in 0..k {
            for j in 0..m {
                row.push(fmt(s.theta[(r, j)]));
            }
        }
        row.extend(s.mu_theta.iter().map(|v| fmt(*v)));
        row.extend([s.tau2, s.nu2, s.kappa2, s.spatial_decay, s.ar_decay].map(fmt));
        row.push(fmt(draws.log_joint.get(d).copied().unwrap_or(f64::NAN)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a draws CSV for `n_basis` coefficients at `site_ids`. Delta chains come back empty.
pub fn load_draws(
    path: &Path,
    n_basis: usize,
    site_ids: &[String],
    config: SamplerConfig,
) -> Result<PosteriorDraws> {
    let mut rdr = reader(path)?;
    let mut names: Vec<String> = Vec::new();
    for r in 0..n_basis {
        for id in site_ids {
            names.push(format!("theta_{r}_{id}"));
        }
    }
    names.extend((0..n_basis).map(|r| format!("mu_theta_{r}")));
    names.extend(SCALARS.iter().map(|s| s.to_string()));
    let want: Vec<&str> = names.iter().map(String::as_str).collect();
    let header = check_header(&mut rdr, &want, path)?;
    let idx: Vec<usize> = want.iter().map(|c| column(&header, c)).collect();
    let lj = header.iter().position(|h| h == "log_joint");
    let m = site_ids.len();
    let mut states = Vec::new();
    let mut log_joint = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::input(format!("row {row}: {e}")))?;
        let vals = idx
            .iter()
            .zip(&want)
            .map(|(&c, name)| parse_f64(rec.get(c).unwrap_or(""), name, row))
            .collect::<Result<Vec<f64>>>()?;
        let theta = DMatrix::from_row_slice(n_basis, m, &vals[..n_basis * m]);
        let mu_theta = vals[n_basis * m..n_basis * (m + 1)].to_vec();
        let s = &vals[n_basis * (m + 1)..];
        states.push(ModelState {
            theta,
            mu_theta,
            delta: vec![Vec::new(); m],
            tau2: s[0],
            nu2: s[1],
            kappa2: s[2],
            spatial_decay: s[3],
            ar_decay: s[4],
        });
        let l = lj
            .and_then(|c| rec.get(c))
            .and_then(|v| v.parse().ok())
            .unwrap_or(f64::NAN);
        log_joint.push(l);
    }
    if states.is_empty() {
        return Err(Error::input(format!("{}: no draws", path.display())));
    }
    Ok(PosteriorDraws {
        states,
        log_joint,
        acceptance: AcceptanceStats::default(),
        config,
    })
}

/// Per-parameter chain summary; `None` where the chain is degenerate or too short.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticEntry {
    pub parameter: String,
    pub ess: Option<f64>,
    pub geweke_z: Option<f64>,
}

/// Everything needed to reuse a fit, plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitManifest {
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub priors: PriorSpec,
    pub basis: BasisSpec,
    pub family: KernelFamily,
    pub site_ids: Vec<String>,
    pub coords: Vec<Coord>,
    pub retained: usize,
    pub acceptance: AcceptanceStats,
    pub diagnostics: Vec<DiagnosticEntry>,
    /// The only non-reproducible field.
    pub wall_seconds: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

pub const PREDICTION_HEADER: [&str; 7] =
    ["site_id", "x", "y_coord", "t", "mean", "hpd_lo", "hpd_hi"];

pub fn write_predictions(path: &Path, curves: &[PredictedCurve]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(PREDICTION_HEADER)?;
    for c in curves {
        for i in 0..c.times.len() {
            w.write_record([
                c.site_id.clone(),
                fmt(c.coords[0]),
                fmt(c.coords[1]),
                fmt(c.times[i]),
                fmt(c.mean[i]),
                fmt(c.hpd_lo[i]),
                fmt(c.hpd_hi[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictedCurve>> {
    let mut rdr = reader(path)?;
    let header = check_header(&mut rdr, &PREDICTION_HEADER, path)?;
    let idx: Vec<usize> = PREDICTION_HEADER
        .iter()
        .map(|c| column(&header, c))
        .collect();
    let mut out: Vec<PredictedCurve> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::input(format!("row {row}: {e}")))?;
        let id = rec.get(idx[0]).unwrap_or("").to_string();
        let v = (1..7)
            .map(|c| parse_f64(rec.get(idx[c]).unwrap_or(""), PREDICTION_HEADER[c], row))
            .collect::<Result<Vec<f64>>>()?;
        let pos = match out.iter().position(|c| c.site_id == id) {
            Some(p) => p,
            None => {
                out.push(PredictedCurve {
                    site_id: id,
                    coords: [v[0], v[1]],
                    times: vec![],
                    mean: vec![],
                    hpd_lo: vec![],
                    hpd_hi: vec![],
                    draws: None,
                });
                out.len() - 1
            }
        };
        let c = &mut out[pos];
        c.times.push(v[2]);
        c.mean.push(v[3]);
        c.hpd_lo.push(v[4]);
        c.hpd_hi.push(v[5]);
    }
    if out.is_empty() {
        return Err(Error::input(format!(
            "{}: no prediction rows",
            path.display()
        )));
    }
    Ok(out)
}

/// Long-format metric row: `replicate,site_id,metric,value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub replicate: usize,
    pub site_id: String,
    pub metric: String,
    pub value: f64,
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["replicate", "site_id", "metric", "value"])?;
    for r in rows {
        w.write_record([
            r.replicate.to_string(),
            r.site_id.clone(),
            r.metric.clone(),
            fmt(r.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Target sites `site_id,x,y_coord` with an optional `t` column. Without `t`
/// each site comes back with an empty time list.
pub fn load_targets(path: &Path) -> Result<Vec<(String, Coord, Vec<f64>)>> {
    let mut rdr = reader(path)?;
    let header = check_header(&mut rdr, &["site_id", "x", "y_coord"], path)?;
    let (ci, cx, cy) = (
        column(&header, "site_id"),
        column(&header, "x"),
        column(&header, "y_coord"),
    );
    let ct = header.iter().position(|h| h == "t");
    let mut out: Vec<(String, Coord, Vec<f64>)> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::input(format!("row {row}: {e}")))?;
        let id = rec.get(ci).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::input(format!("row {row}: empty site_id")));
        }
        let c = [
            parse_f64(rec.get(cx).unwrap_or(""), "x", row)?,
            parse_f64(rec.get(cy).unwrap_or(""), "y_coord", row)?,
        ];
        let t = ct
            .map(|c| parse_f64(rec.get(c).unwrap_or(""), "t", row))
            .transpose()?;
        match out.iter_mut().find(|e| e.0 == id) {
            Some(e) => {
                if e.1 != c {
                    return Err(Error::input(format!(
                        "row {row}: coordinates of target {id} change"
                    )));
                }
                e.2.extend(t);
            }
            None => out.push((id, c, t.into_iter().collect())),
        }
    }
    if out.is_empty() {
        return Err(Error::input(format!("{}: no targets", path.display())));
    }
    Ok(out)
}
