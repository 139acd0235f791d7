//! Bayesian hierarchical modelling of spatially correlated curves observed on
//! irregular time grids.
//!
//! Curves are expanded in a Bernstein polynomial basis whose coefficients form
//! Gaussian random fields over space, with an AR(1) random effect driven by the
//! gaps between consecutive observations. Posterior sampling is
//! Metropolis-within-Gibbs; prediction at new sites krige the coefficient
//! fields draw by draw.

pub mod basis;
pub mod config;
pub mod error;
pub mod io;
pub mod mcmc;
pub mod metrics;
pub mod model;
pub mod pm10;
pub mod predict;
pub mod report;
pub mod synth;
pub mod tridiag;

pub use error::{Error, Result};
