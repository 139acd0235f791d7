//! Fit scores, HPD intervals and chain diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Estimate and target on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePair {
    pub t: Vec<f64>,
    pub estimate: Vec<f64>,
    pub target: Vec<f64>,
}

impl CurvePair {
    pub fn new(t: Vec<f64>, estimate: Vec<f64>, target: Vec<f64>) -> Result<Self> {
        if estimate.len() != t.len() || target.len() != t.len() {
            return Err(Error::input(format!(
                "curve lengths differ: grid {}, estimate {}, target {}",
                t.len(),
                estimate.len(),
                target.len()
            )));
        }
        if t.len() < 2 {
            return Err(Error::input("at least two grid points required"));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input("grid not strictly increasing"));
        }
        Ok(Self {
            t,
            estimate,
            target,
        })
    }
}

/// Trapezoid rule on an irregular grid.
pub fn trapezoid(t: &[f64], f: &[f64]) -> f64 {
    t.windows(2)
        .zip(f.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
        .sum()
}

/// Integrated squared error of the estimate against the target.
pub fn ise(pair: &CurvePair) -> f64 {
    let sq: Vec<f64> = pair
        .estimate
        .iter()
        .zip(&pair.target)
        .map(|(a, b)| (a - b).powi(2))
        .collect();
    trapezoid(&pair.t, &sq)
}

/// Convenience wrapper validating the inputs.
pub fn ise_on_grid(t: &[f64], estimate: &[f64], target: &[f64]) -> Result<f64> {
    Ok(ise(&CurvePair::new(
        t.to_vec(),
        estimate.to_vec(),
        target.to_vec(),
    )?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseDecomposition {
    pub bias2: f64,
    pub variance: f64,
    pub mse: f64,
}

/// Empirical bias/variance split over replicates; population variance, so `mse = bias2 + variance`.
pub fn mse_decomposition(estimates: &[f64], truth: f64) -> Result<MseDecomposition> {
    if estimates.len() < 2 {
        return Err(Error::input("at least two replicates required"));
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let variance = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    let bias2 = (mean - truth).powi(2);
    Ok(MseDecomposition {
        bias2,
        variance,
        mse: bias2 + variance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpdInterval {
    pub lower: f64,
    pub upper: f64,
    pub mass: f64,
}

impl HpdInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

pub const MIN_HPD_DRAWS: usize = 10;

/// Shortest interval spanning `ceil(mass * n)` consecutive order statistics.
pub fn hpd(draws: &[f64], mass: f64) -> Result<HpdInterval> {
    if draws.len() < MIN_HPD_DRAWS {
        return Err(Error::input(format!(
            "HPD needs at least {MIN_HPD_DRAWS} draws, got {}",
            draws.len()
        )));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::input(format!(
            "HPD mass must lie in (0, 1), got {mass}"
        )));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(hpd_sorted(&sorted, mass))
}

/// [`hpd`] on already sorted draws, no validation.
pub(crate) fn hpd_sorted(sorted: &[f64], mass: f64) -> HpdInterval {
    let n = sorted.len();
    let k = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let (mut best, mut lo) = (f64::INFINITY, 0);
    for i in 0..=n - k {
        let w = sorted[i + k - 1] - sorted[i];
        if w < best {
            best = w;
            lo = i;
        }
    }
    HpdInterval {
        lower: sorted[lo],
        upper: sorted[lo + k - 1],
        mass,
    }
}

/// Posterior mean plus HPD interval of a set of draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawSummary {
    pub mean: f64,
    pub hpd_lo: f64,
    pub hpd_hi: f64,
}

pub fn summarize(draws: &[f64], mass: f64) -> Result<DrawSummary> {
    let h = hpd(draws, mass)?;
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    Ok(DrawSummary {
        mean,
        hpd_lo: h.lower,
        hpd_hi: h.upper,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub n: usize,
    pub ess: f64,
    pub geweke_z: f64,
    /// Set when the chain has (numerically) zero variance; `ess` and `geweke_z` are then NaN.
    pub degenerate: bool,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
}

/// Effective sample size with Geyer's initial monotone positive sequence truncation.
/// `None` for a constant chain.
pub fn effective_sample_size(x: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 4 {
        return None;
    }
    let (m, var) = mean_var(x);
    if !(var > 1e-300 * m.abs().max(1.0)) {
        return None;
    }
    let acf = |lag: usize| -> f64 {
        (0..n - lag)
            .map(|i| (x[i] - m) * (x[i + lag] - m))
            .sum::<f64>()
            / (n as f64 * var)
    };
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let gamma = acf(2 * k) + acf(2 * k + 1);
        if gamma <= 0.0 {
            break;
        }
        let gamma = gamma.min(prev);
        sum += gamma;
        prev = gamma;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    Some((n as f64 / tau).min(n as f64 * (n as f64).log10().max(1.0)))
}

/// Geweke z comparing the first `first` and last `last` fractions of the chain,
/// with standard errors from each segment's effective sample size.
pub fn geweke_z(x: &[f64], first: f64, last: f64) -> Option<f64> {
    let n = x.len();
    let a = &x[..((first * n as f64) as usize).max(2)];
    let b = &x[n - ((last * n as f64) as usize).max(2)..];
    let se2 = |s: &[f64]| -> Option<(f64, f64)> {
        let (m, v) = mean_var(s);
        let ess = effective_sample_size(s)?;
        Some((m, v / ess))
    };
    let (ma, va) = se2(a)?;
    let (mb, vb) = se2(b)?;
    Some((ma - mb) / (va + vb).sqrt())
}

pub const MIN_DIAGNOSTIC_DRAWS: usize = 100;

pub fn chain_diagnostics(x: &[f64]) -> Result<ChainDiagnostics> {
    if x.len() < MIN_DIAGNOSTIC_DRAWS {
        return Err(Error::input(format!(
            "chain diagnostics need at least {MIN_DIAGNOSTIC_DRAWS} draws, got {}",
            x.len()
        )));
    }
    match effective_sample_size(x) {
        None => Ok(ChainDiagnostics {
            n: x.len(),
            ess: f64::NAN,
            geweke_z: f64::NAN,
            degenerate: true,
        }),
        Some(ess) => Ok(ChainDiagnostics {
            n: x.len(),
            ess,
            geweke_z: geweke_z(x, 0.1, 0.5).unwrap_or(f64::NAN),
            degenerate: false,
        }),
    }
}
