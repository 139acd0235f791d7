//! Bernstein polynomial bases over an arbitrary bounded interval.
//!
//! For degree `p` on `[a, b]` the `p + 1` basis functions are
//!
//! ```text
//! b_r(t) = C(p, r) x^r (1 - x)^(p - r),   x = (t - a) / (b - a)
//! ```
//!
//! They are non-negative, sum to one, and reduce to a Kronecker delta at the
//! interval endpoints.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this degree binomial weights are evaluated in log space.
const LOG_SPACE_DEGREE: usize = 15;

/// Relative tolerance for snapping slightly out-of-range abscissae onto the interval.
const ENDPOINT_SNAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub degree: usize,
    pub lower: f64,
    pub upper: f64,
}

impl BasisSpec {
    pub fn new(degree: usize, lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() || upper - lower <= 0.0 {
            return Err(Error::config(format!(
                "basis interval [{lower}, {upper}] must be finite with lower < upper"
            )));
        }
        Ok(Self {
            degree,
            lower,
            upper,
        })
    }

    /// Basis with `count` functions (degree `count - 1`).
    pub fn with_count(count: usize, lower: f64, upper: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::config("basis count must be at least 1"));
        }
        Self::new(count - 1, lower, upper)
    }

    /// Smallest interval covering every supplied time, shared by all curves.
    pub fn spanning<'a, I>(degree: usize, times: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a f64>,
    {
        let (lo, hi) = times
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
                (lo.min(t), hi.max(t))
            });
        Self::new(degree, lo, hi)
    }

    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, t: f64) -> bool {
        self.to_unit(t).is_ok()
    }

    /// Maps `t` onto `[0, 1]`, snapping values within tolerance of an endpoint.
    pub fn to_unit(&self, t: f64) -> Result<f64> {
        if self.width() <= 0.0 || !self.width().is_finite() {
            return Err(Error::config("degenerate basis interval"));
        }
        let tol = ENDPOINT_SNAP * self.width().max(1.0);
        if !t.is_finite() || t < self.lower - tol || t > self.upper + tol {
            return Err(Error::domain(format!(
                "t = {t} lies outside the basis interval [{}, {}]",
                self.lower, self.upper
            )));
        }
        let x = (t - self.lower) / self.width();
        Ok(x.clamp(0.0, 1.0))
    }
}

/// Binomial weight C(p, r) evaluated directly for small p.
fn binomial(p: usize, r: usize) -> f64 {
    let r = r.min(p - r);
    let mut acc: u128 = 1;
    for k in 0..r {
        acc = acc * (p - k) as u128 / (k + 1) as u128;
    }
    acc as f64
}

fn ln_binomial(p: usize, r: usize) -> f64 {
    let r = r.min(p - r);
    (0..r)
        .map(|k| ((p - k) as f64).ln() - ((k + 1) as f64).ln())
        .sum()
}

/// Closed-form evaluation of all `p + 1` basis functions at `t`.
pub fn eval_basis(spec: &BasisSpec, t: f64) -> Result<Vec<f64>> {
    let x = spec.to_unit(t)?;
    let p = spec.degree;
    let mut out = vec![0.0; p + 1];
    // exact deltas at the endpoints, also keeps ln(0) out of the log-space path
    if x == 0.0 {
        out[0] = 1.0;
        return Ok(out);
    }
    if x == 1.0 {
        out[p] = 1.0;
        return Ok(out);
    }
    if p <= LOG_SPACE_DEGREE {
        for (r, v) in out.iter_mut().enumerate() {
            *v = binomial(p, r) * x.powi(r as i32) * (1.0 - x).powi((p - r) as i32);
        }
    } else {
        let (lx, l1x) = (x.ln(), (-x).ln_1p());
        for (r, v) in out.iter_mut().enumerate() {
            *v = (ln_binomial(p, r) + r as f64 * lx + (p - r) as f64 * l1x).exp();
        }
    }
    Ok(out)
}

/// Same values as [`eval_basis`], built up through the degree recursion
/// `b_r^p = (1 - x) b_r^{p-1} + x b_{r-1}^{p-1}`.
pub fn eval_basis_recursive(spec: &BasisSpec, t: f64) -> Result<Vec<f64>> {
    let x = spec.to_unit(t)?;
    let mut row = Vec::with_capacity(spec.degree + 1);
    row.push(1.0);
    for _ in 0..spec.degree {
        row.push(0.0);
        for r in (0..row.len()).rev() {
            let left = if r > 0 { row[r - 1] } else { 0.0 };
            row[r] = (1.0 - x) * row[r] + x * left;
        }
    }
    Ok(row)
}

/// Basis values at an ordered set of abscissae, one row per time point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub spec: BasisSpec,
    pub times: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl BasisMatrix {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    /// Evaluates `sum_r coef[r] * b_r(t_i)` at every row.
    pub fn expand(&self, coef: &[f64]) -> Vec<f64> {
        assert_eq!(coef.len(), self.values.ncols());
        (0..self.values.nrows())
            .map(|i| (0..coef.len()).map(|r| self.values[(i, r)] * coef[r]).sum())
            .collect()
    }
}

pub fn design_matrix(spec: &BasisSpec, times: &[f64]) -> Result<BasisMatrix> {
    if let Some(w) = times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::input(format!(
            "times must be strictly increasing (violated at index {})",
            w + 1
        )));
    }
    let mut values = DMatrix::zeros(times.len(), spec.len());
    for (i, &t) in times.iter().enumerate() {
        for (r, v) in eval_basis(spec, t)?.into_iter().enumerate() {
            values[(i, r)] = v;
        }
    }
    Ok(BasisMatrix {
        spec: *spec,
        times: times.to_vec(),
        values,
    })
}
