//! Threshold exceedance summaries of predicted curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::PredictedCurve;

/// Thresholds on the log scale and the rule that flags a site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Ascending: guideline, chronic limit, acute limit (log micrograms per cubic metre).
    pub levels: Vec<f64>,
    /// A site is flagged when its mean exceeds `flag_level` on more than `flag_fraction` of points.
    pub flag_level: f64,
    pub flag_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            levels: vec![3.0, 3.6, 4.3],
            flag_level: 3.6,
            flag_fraction: 0.5,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config(
                "thresholds must be non-empty and strictly increasing",
            ));
        }
        if !(0.0..=1.0).contains(&self.flag_fraction) {
            return Err(Error::config("flag_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Fraction of a curve's points above one threshold, for the mean and both
/// interval ends. `lower` (from `hpd_lo`) and `upper` (from `hpd_hi`) bracket `mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub site_id: String,
    pub threshold: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteFlag {
    pub site_id: String,
    pub fraction_above: f64,
    pub flagged: bool,
}

fn frac_above(x: &[f64], level: f64) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().filter(|&&v| v > level).count() as f64 / x.len() as f64
}

pub fn exceedance(curves: &[PredictedCurve], thresholds: &Thresholds) -> Result<Vec<Exceedance>> {
    thresholds.validate()?;
    let mut out = Vec::new();
    for c in curves {
        for &level in &thresholds.levels {
            out.push(Exceedance {
                site_id: c.site_id.clone(),
                threshold: level,
                mean: frac_above(&c.mean, level),
                lower: frac_above(&c.hpd_lo, level),
                upper: frac_above(&c.hpd_hi, level),
            });
        }
    }
    Ok(out)
}

pub fn flag_sites(curves: &[PredictedCurve], thresholds: &Thresholds) -> Result<Vec<SiteFlag>> {
    thresholds.validate()?;
    Ok(curves
        .iter()
        .map(|c| {
            let f = frac_above(&c.mean, thresholds.flag_level);
            SiteFlag {
                site_id: c.site_id.clone(),
                fraction_above: f,
                flagged: f > thresholds.flag_fraction,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(id: &str, mean: Vec<f64>, width: f64) -> PredictedCurve {
        let n = mean.len();
        PredictedCurve {
            site_id: id.into(),
            coords: [0.0, 0.0],
            times: (0..n).map(|i| i as f64).collect(),
            hpd_lo: mean.iter().map(|m| m - width).collect(),
            hpd_hi: mean.iter().map(|m| m + width).collect(),
            mean,
            draws: None,
        }
    }

    #[test]
    fn below_everything() {
        let c = curve("a", vec![2.0, 2.5, 2.9], 0.05);
        let ex = exceedance(&[c.clone()], &Thresholds::default()).unwrap();
        assert_eq!(ex.len(), 3);
        assert!(ex
            .iter()
            .all(|e| e.mean == 0.0 && e.lower == 0.0 && e.upper == 0.0));
        assert!(!flag_sites(&[c], &Thresholds::default()).unwrap()[0].flagged);
    }

    #[test]
    fn interval_brackets_mean_fraction() {
        let c = curve("b", vec![3.5, 3.65, 3.7, 4.0], 0.2);
        let ex = exceedance(&[c.clone()], &Thresholds::default()).unwrap();
        for e in &ex {
            assert!(e.lower <= e.mean && e.mean <= e.upper);
        }
        let f = &flag_sites(&[c], &Thresholds::default()).unwrap()[0];
        assert_eq!(f.fraction_above, 0.75);
        assert!(f.flagged);
    }

    #[test]
    fn exactly_half_is_not_flagged() {
        let c = curve("c", vec![3.0, 3.7], 0.0);
        assert!(!flag_sites(&[c], &Thresholds::default()).unwrap()[0].flagged);
    }

    #[test]
    fn unordered_thresholds_rejected() {
        let t = Thresholds {
            levels: vec![3.6, 3.0],
            ..Thresholds::default()
        };
        assert!(t.validate().is_err());
    }
}
