//! Symmetric positive definite tridiagonal systems.
//!
//! The AR(1) prior precision of a delta chain is tridiagonal, and adding the
//! diagonal likelihood precision keeps it that way, so every per-site solve and
//! Gaussian draw here is O(n).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// `off[i]` couples entries `i` and `i + 1`.
    pub off: Vec<f64>,
}

/// Lower bidiagonal Cholesky factor.
#[derive(Debug, Clone)]
pub struct TridiagCholesky {
    l_diag: Vec<f64>,
    l_sub: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len().max(1));
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Precision of an AR(1) chain `x_1 ~ N(0, var)`, `x_i | x_(i-1) ~ N(coef_i x_(i-1), var)`.
    /// `coef[0]` is ignored.
    pub fn ar1_precision(coef: &[f64], var: f64) -> Self {
        let n = coef.len();
        let mut diag = vec![1.0 / var; n];
        let mut off = vec![0.0; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            diag[i] += coef[i + 1] * coef[i + 1] / var;
            off[i] = -coef[i + 1] / var;
        }
        Self { diag, off }
    }

    pub fn add_diagonal(&mut self, extra: &[f64]) {
        for (d, e) in self.diag.iter_mut().zip(extra) {
            *d += e;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.off[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    pub fn cholesky(&self) -> Result<TridiagCholesky> {
        let n = self.len();
        let mut l_diag = vec![0.0; n];
        let mut l_sub = vec![0.0; n.saturating_sub(1)];
        for i in 0..n {
            let mut d = self.diag[i];
            if i > 0 {
                l_sub[i - 1] = self.off[i - 1] / l_diag[i - 1];
                d -= l_sub[i - 1] * l_sub[i - 1];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::numerical(format!(
                    "tridiagonal system not positive definite at row {i} (pivot {d:e})"
                )));
            }
            l_diag[i] = d.sqrt();
        }
        Ok(TridiagCholesky { l_diag, l_sub })
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i + 1 == j {
                self.off[i]
            } else if j + 1 == i {
                self.off[j]
            } else {
                0.0
            }
        })
    }
}

impl TridiagCholesky {
    pub fn len(&self) -> usize {
        self.l_diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.l_diag.is_empty()
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        for i in 0..b.len() {
            if i > 0 {
                b[i] -= self.l_sub[i - 1] * b[i - 1];
            }
            b[i] /= self.l_diag[i];
        }
    }

    /// Solves `L^T x = y` in place.
    pub fn backward(&self, y: &mut [f64]) {
        for i in (0..y.len()).rev() {
            if i + 1 < y.len() {
                y[i] -= self.l_sub[i] * y[i + 1];
            }
            y[i] /= self.l_diag[i];
        }
    }

    /// Solves `Q x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l_diag.iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Draws from `N(Q^-1 h, Q^-1)` given the canonical parameter `h`.
    pub fn sample_canonical<R: Rng + ?Sized>(&self, h: &[f64], rng: &mut R) -> Vec<f64> {
        let mut mean = h.to_vec();
        self.forward(&mut mean);
        // L^T x = L^-1 h + z  gives  x = Q^-1 h + L^-T z
        for v in mean.iter_mut() {
            *v += rng.sample::<f64, _>(StandardNormal);
        }
        self.backward(&mut mean);
        mean
    }
}
