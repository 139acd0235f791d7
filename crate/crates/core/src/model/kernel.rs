use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::Coord;
use crate::error::{Error, Result};

const BASE_JITTER: f64 = 1e-9;
const MAX_JITTER_DOUBLINGS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `C(h) = variance * exp(-(decay * h)^2)`
    #[default]
    Gaussian,
    /// `C(h) = variance * exp(-decay * h)`
    Exponential,
}

impl KernelFamily {
    pub fn correlation(self, decay: f64, h: f64) -> f64 {
        match self {
            KernelFamily::Gaussian => (-(decay * h).powi(2)).exp(),
            KernelFamily::Exponential => (-decay * h).exp(),
        }
    }
}

/// Isotropic covariance function between site coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialKernel {
    pub family: KernelFamily,
    pub variance: f64,
    pub decay: f64,
}

impl SpatialKernel {
    pub fn new(family: KernelFamily, variance: f64, decay: f64) -> Result<Self> {
        if !(variance > 0.0 && decay > 0.0 && variance.is_finite() && decay.is_finite()) {
            return Err(Error::domain(format!(
                "kernel variance ({variance}) and decay ({decay}) must be positive"
            )));
        }
        Ok(Self {
            family,
            variance,
            decay,
        })
    }

    pub fn covariance(&self, h: f64) -> f64 {
        self.variance * self.family.correlation(self.decay, h)
    }
}

pub fn distance(a: &Coord, b: &Coord) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn pairwise_distances(coords: &[Coord]) -> DMatrix<f64> {
    let m = coords.len();
    DMatrix::from_fn(m, m, |i, j| distance(&coords[i], &coords[j]))
}

/// Cross-distances between two coordinate sets, `rows x cols`.
pub fn cross_distances(rows: &[Coord], cols: &[Coord]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| distance(&rows[i], &cols[j]))
}

/// `m x m` covariance matrix, no jitter.
pub fn kernel_matrix(kernel: &SpatialKernel, coords: &[Coord]) -> DMatrix<f64> {
    pairwise_distances(coords).map(|h| kernel.covariance(h))
}

/// Cholesky factor with diagonal jitter `1e-9 * scale`, doubled up to six times on failure.
pub(crate) fn jittered_cholesky(
    matrix: &DMatrix<f64>,
    scale: f64,
    what: &str,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = BASE_JITTER * scale;
    for _ in 0..=MAX_JITTER_DOUBLINGS {
        let mut a = matrix.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += jitter;
        }
        if let Some(c) = a.cholesky() {
            if c.l_dirty()
                .diagonal()
                .iter()
                .all(|d| d.is_finite() && *d > 0.0)
            {
                return Ok((c, jitter));
            }
        }
        jitter *= 2.0;
    }
    let diag_min = matrix
        .diagonal()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Err(Error::numerical(format!(
        "{what}: Cholesky failed for {n}x{n} matrix after jitter {:.3e} (min diagonal {diag_min:.3e})",
        jitter / 2.0,
        n = matrix.nrows()
    )))
}

/// Factored spatial correlation matrix `R`, so that the covariance is `kappa2 * R`.
#[derive(Debug, Clone)]
pub struct KernelFactor {
    pub family: KernelFamily,
    pub decay: f64,
    pub jitter: f64,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
    ones_solved: DVector<f64>,
}

impl KernelFactor {
    pub fn new(family: KernelFamily, decay: f64, coords: &[Coord]) -> Result<Self> {
        if !(decay > 0.0 && decay.is_finite()) {
            return Err(Error::domain(format!(
                "spatial decay must be positive, got {decay}"
            )));
        }
        let corr = pairwise_distances(coords).map(|h| family.correlation(decay, h));
        let (chol, jitter) = jittered_cholesky(&corr, 1.0, "spatial correlation matrix")?;
        let log_det = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();
        let ones_solved = chol.solve(&DVector::from_element(coords.len(), 1.0));
        Ok(Self {
            family,
            decay,
            jitter,
            chol,
            log_det,
            ones_solved,
        })
    }

    pub fn dim(&self) -> usize {
        self.ones_solved.len()
    }

    /// Lower triangular factor `L` with `R = L L^T`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `R^-1 B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `x^T R^-1 x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(x)
            .expect("triangular solve");
        z.norm_squared()
    }

    /// `log |R|`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `R^-1 1`.
    pub fn ones_solved(&self) -> &DVector<f64> {
        &self.ones_solved
    }

    /// `1^T R^-1 1`.
    pub fn ones_quad(&self) -> f64 {
        self.ones_solved.sum()
    }

    /// Log density of `N(mean * 1, kappa2 * R)` at `x`.
    pub fn mvn_ln_pdf(&self, x: &DVector<f64>, mean: f64, kappa2: f64) -> f64 {
        let m = x.len() as f64;
        let centered = x.add_scalar(-mean);
        -0.5 * (m * (2.0 * std::f64::consts::PI * kappa2).ln()
            + self.log_det
            + self.quad_form(&centered) / kappa2)
    }
}
