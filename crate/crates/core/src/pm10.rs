//! Hourly pollutant series to irregular daily-scale curves.
//!
//! Each month is classified by its fraction of missing hours, which fixes the
//! width of the aggregation window for that month. Windows start at the first
//! hour of the month; the median of the non-missing hours in each window becomes
//! one observation at the window's first day. All-missing windows become masked
//! points, except a trailing partial window, which is dropped when empty.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::stream_rng;
use crate::model::{Coord, SiteSeries};

pub const HOURS_PER_DAY: usize = 24;

/// One site, one calendar year of hourly values.
#[derive(Debug, Clone, PartialEq)]
pub struct RawHourlySeries {
    pub site_id: String,
    pub coords: Coord,
    /// `None` marks a missing hour. Length 8,760 or 8,784 (leap year).
    pub values: Vec<Option<f64>>,
}

impl RawHourlySeries {
    pub fn validate(&self) -> Result<()> {
        month_lengths(self.values.len())
            .map(|_| ())
            .map_err(|e| e.context(format!("site {}", self.site_id)))
    }
}

/// Days per month for a year of `hours` hourly slots.
pub fn month_lengths(hours: usize) -> Result<[usize; 12]> {
    let feb = match hours {
        8760 => 28,
        8784 => 29,
        n => {
            return Err(Error::input(format!(
                "{n} hourly slots do not form a calendar year (8760 or 8784)"
            )))
        }
    };
    Ok([31, feb, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31])
}

/// Aggregation window for a month with `missing` of `total` hours missing.
///
/// Upper-inclusive bounds at 20/40/60/80 percent, compared in integers so that
/// exactly 20% falls in the first category.
pub fn window_hours(missing: usize, total: usize) -> usize {
    let pct = |p: usize| missing * 100 <= p * total;
    if pct(20) || pct(40) {
        24
    } else if pct(60) {
        48
    } else if pct(80) {
        72
    } else {
        120
    }
}

/// Category 1..=5 of the same bounds (the first two share a 24 h window).
pub fn category(missing: usize, total: usize) -> usize {
    [20, 40, 60, 80]
        .iter()
        .position(|&p| missing * 100 <= p * total)
        .map_or(5, |k| k + 1)
}

/// How one month of one site was summarised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingCategory {
    pub site_id: String,
    /// 1 = January.
    pub month: usize,
    pub missing_fraction: f64,
    pub category: usize,
    pub window_hours: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pm10Options {
    /// Natural log of each window median.
    pub log_transform: bool,
}

impl Default for Pm10Options {
    fn default() -> Self {
        Self {
            log_transform: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub series: SiteSeries,
    pub months: Vec<MissingCategory>,
}

impl Preprocessed {
    pub fn n_valid(&self) -> usize {
        self.series.n_observed()
    }

    pub fn n_missing(&self) -> usize {
        self.series.n_missing()
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Aggregates one site. Time is in days since the first hour of the year.
///
/// With the log transform on, a window whose median is not positive has no
/// finite log and is emitted as a masked point.
pub fn preprocess_site(raw: &RawHourlySeries, opts: Pm10Options) -> Result<Preprocessed> {
    let lengths =
        month_lengths(raw.values.len()).map_err(|e| e.context(format!("site {}", raw.site_id)))?;
    if let Some(h) = raw
        .values
        .iter()
        .position(|v| v.is_some_and(|x| !x.is_finite()))
    {
        return Err(Error::input(format!(
            "site {}: non-finite value at hour {h}",
            raw.site_id
        )));
    }
    let (mut times, mut values, mut missing) = (Vec::new(), Vec::new(), Vec::new());
    let mut months = Vec::with_capacity(12);
    let mut start = 0;
    for (k, days) in lengths.iter().enumerate() {
        let total = days * HOURS_PER_DAY;
        let slots = &raw.values[start..start + total];
        let n_missing = slots.iter().filter(|v| v.is_none()).count();
        let window = window_hours(n_missing, total);
        months.push(MissingCategory {
            site_id: raw.site_id.clone(),
            month: k + 1,
            missing_fraction: n_missing as f64 / total as f64,
            category: category(n_missing, total),
            window_hours: window,
        });
        for (w, chunk) in slots.chunks(window).enumerate() {
            let mut obs: Vec<f64> = chunk.iter().flatten().copied().collect();
            let partial = chunk.len() < window;
            if partial && obs.is_empty() {
                continue;
            }
            let med = median(&mut obs);
            let value = match med {
                Some(v) if opts.log_transform => (v > 0.0).then(|| v.ln()),
                other => other,
            };
            times.push((start + w * window) as f64 / HOURS_PER_DAY as f64);
            values.push(value.unwrap_or(f64::NAN));
            missing.push(value.is_none());
        }
        start += total;
    }
    let series = SiteSeries::new(raw.site_id.clone(), raw.coords, times, values, missing)?;
    Ok(Preprocessed { series, months })
}

/// Sites are processed independently; output is sorted by id.
pub fn preprocess_pm10(raw: &[RawHourlySeries], opts: Pm10Options) -> Result<Vec<Preprocessed>> {
    use rayon::prelude::*;
    let mut out = raw
        .par_iter()
        .map(|r| preprocess_site(r, opts))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.series.site_id.cmp(&b.series.site_id));
    Ok(out)
}

/// Reads `site_id,x,y_coord,hour,value`; `value` empty or `NA` means missing.
/// Hours of each site must run 0, 1, 2, ... with no gaps.
pub fn load_raw_hourly(path: &Path) -> Result<Vec<RawHourlySeries>> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::input(format!("{}: missing column `{name}`", path.display())))
    };
    let (ci, cx, cy, ch, cv) = (
        col("site_id")?,
        col("x")?,
        col("y_coord")?,
        col("hour")?,
        col("value")?,
    );
    let mut out: Vec<RawHourlySeries> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::input(format!("row {row}: {e}")))?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize, what: &str| {
            field(c)
                .parse::<f64>()
                .map_err(|_| Error::input(format!("row {row}: cannot parse {what} `{}`", field(c))))
        };
        let id = field(ci).to_string();
        let coords = [num(cx, "x")?, num(cy, "y_coord")?];
        let hour: usize = field(ch)
            .parse()
            .map_err(|_| Error::input(format!("row {row}: cannot parse hour `{}`", field(ch))))?;
        let value = match field(cv) {
            "" | "NA" | "na" | "NaN" => None,
            _ => Some(num(cv, "value")?),
        };
        let pos = match out.iter().position(|s| s.site_id == id) {
            Some(p) => p,
            None => {
                out.push(RawHourlySeries {
                    site_id: id.clone(),
                    coords,
                    values: Vec::new(),
                });
                out.len() - 1
            }
        };
        let s = &mut out[pos];
        if hour != s.values.len() {
            return Err(Error::input(format!(
                "row {row}: site {id} expected hour {}, got {hour}",
                s.values.len()
            )));
        }
        if s.coords != coords {
            return Err(Error::input(format!(
                "row {row}: coordinates of site {id} change"
            )));
        }
        s.values.push(value);
    }
    if out.is_empty() {
        return Err(Error::input(format!("{}: no data rows", path.display())));
    }
    for s in &out {
        s.validate()?;
    }
    Ok(out)
}

pub fn write_raw_hourly(path: &Path, raw: &[RawHourlySeries]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["site_id", "x", "y_coord", "hour", "value"])?;
    for s in raw {
        for (h, v) in s.values.iter().enumerate() {
            let value = v.map_or_else(|| "NA".to_string(), |x| format!("{x}"));
            w.write_record([
                s.site_id.clone(),
                format!("{}", s.coords[0]),
                format!("{}", s.coords[1]),
                h.to_string(),
                value,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Synthetic non-leap year whose missingness mimics a real monitoring network.
///
/// Each month gets a window size drawn from a site-specific mix, a missing
/// fraction inside the matching category, a handful of whole-window outages and
/// scattered missing hours elsewhere (at least one hour of every other window is
/// kept). The mix is redrawn until the site ends up with 209..=226 valid and
/// 1..=14 masked points. Values are log-normal around `exp(3.6)`, with a
/// seasonal swing.
pub fn synthetic_year(site_id: &str, coords: Coord, seed: u64, stream: u64) -> RawHourlySeries {
    const WINDOWS: [usize; 4] = [24, 48, 72, 120];
    const BANDS: [(f64, f64); 4] = [(0.02, 0.38), (0.42, 0.58), (0.62, 0.78), (0.82, 0.95)];
    let lengths = month_lengths(8760).expect("non-leap year");
    let mut rng = stream_rng(seed, stream);
    loop {
        let plan: Vec<usize> = (0..12)
            .map(|_| {
                let u: f64 = rng.random();
                match u {
                    u if u < 0.42 => 0,
                    u if u < 0.80 => 1,
                    u if u < 0.94 => 2,
                    _ => 3,
                }
            })
            .collect();
        let points: Vec<usize> = plan
            .iter()
            .zip(lengths)
            .map(|(&c, d)| (d * 24).div_ceil(WINDOWS[c]))
            .collect();
        let total: usize = points.iter().sum();
        let n_na = rng.random_range(1..=14usize);
        if !(209 + n_na..=226 + n_na).contains(&total) {
            continue;
        }
        // spread the outages over months, whole windows only, never the trailing partial one
        let mut outages = vec![Vec::<usize>::new(); 12];
        let mut placed = 0;
        while placed < n_na {
            let k = rng.random_range(0..12);
            let full = lengths[k] * 24 / WINDOWS[plan[k]];
            let w = rng.random_range(0..full);
            if !outages[k].contains(&w) && outages[k].len() + 1 < full {
                outages[k].push(w);
                placed += 1;
            }
        }
        let mut values = Vec::with_capacity(8760);
        let mut ok = true;
        let mut start = 0;
        for k in 0..12 {
            let hours = lengths[k] * 24;
            let window = WINDOWS[plan[k]];
            let (lo, hi) = BANDS[plan[k]];
            let target = ((lo + (hi - lo) * rng.random::<f64>()) * hours as f64).round() as usize;
            let mut missing = vec![false; hours];
            for &w in &outages[k] {
                missing[w * window..(w + 1) * window]
                    .iter_mut()
                    .for_each(|m| *m = true);
            }
            let forced = outages[k].len() * window;
            // one kept hour per remaining window
            let mut keep = vec![false; hours];
            for (w, start_h) in (0..hours).step_by(window).enumerate() {
                if !outages[k].contains(&w) {
                    let end = (start_h + window).min(hours);
                    keep[rng.random_range(start_h..end)] = true;
                }
            }
            let mut free: Vec<usize> = (0..hours).filter(|&h| !missing[h] && !keep[h]).collect();
            let extra = target.saturating_sub(forced).min(free.len());
            for i in 0..extra {
                let j = rng.random_range(i..free.len());
                free.swap(i, j);
                missing[free[i]] = true;
            }
            let n_miss = missing.iter().filter(|&&m| m).count();
            if window_hours(n_miss, hours) != window {
                ok = false;
                break;
            }
            for (h, &m) in missing.iter().enumerate() {
                let day = (start + h) as f64 / 24.0;
                let season = 0.25 * (2.0 * std::f64::consts::PI * day / 365.0).cos();
                let noise: f64 = rng.sample(rand_distr::StandardNormal);
                values.push((!m).then(|| (3.6 + season + 0.35 * noise).exp()));
            }
            start += hours;
        }
        if ok {
            return RawHourlySeries {
                site_id: site_id.to_string(),
                coords,
                values,
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_table() {
        let total = 1000;
        for (missing, window, cat) in [
            (0, 24, 1),
            (200, 24, 1),
            (201, 24, 2),
            (400, 24, 2),
            (401, 48, 3),
            (600, 48, 3),
            (601, 72, 4),
            (800, 72, 4),
            (801, 120, 5),
            (1000, 120, 5),
        ] {
            assert_eq!(window_hours(missing, total), window, "{missing}");
            assert_eq!(category(missing, total), cat, "{missing}");
        }
    }

    #[test]
    fn median_of_two() {
        assert_eq!(median(&mut [7.0, 3.0]), Some(5.0));
        assert_eq!(median(&mut [2.0, 9.0, 4.0]), Some(4.0));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn rejects_non_calendar_lengths() {
        let raw = RawHourlySeries {
            site_id: "a".into(),
            coords: [0.0, 0.0],
            values: vec![Some(1.0); 100],
        };
        assert!(matches!(
            preprocess_site(&raw, Pm10Options::default()),
            Err(Error::Input(_))
        ));
    }
}
