//! Run configuration: one JSON document, every field optional.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::mcmc::SamplerConfig;
use crate::model::{Coord, PriorSpec, SiteSeries};
use crate::pm10::Pm10Options;
use crate::report::Thresholds;
use crate::synth::{FourierParams, GapScheme, McPlan, ModelParams, SiteLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    /// Curves drawn from the model itself.
    #[default]
    Model,
    /// Spatially correlated Fourier curves.
    Fourier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub study: Study,
    pub gap_scheme: GapScheme,
    pub replicates: usize,
    pub points_per_curve: usize,
    /// Sites sit on a `grid_side x grid_side` jittered grid minus one corner.
    pub grid_side: usize,
    pub grid_jitter: f64,
    pub layout_seed: u64,
    pub model: ModelParams,
    pub fourier: FourierParams,
    /// Observations masked per replicate (0 disables masking).
    pub mask_count: usize,
    pub mask_seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            study: Study::Model,
            gap_scheme: GapScheme::Uniform01,
            replicates: 1,
            points_per_curve: 200,
            grid_side: 4,
            grid_jitter: 0.05,
            layout_seed: 1,
            model: ModelParams::default(),
            fourier: FourierParams::default(),
            mask_count: 0,
            mask_seed: 1,
        }
    }
}

impl SimulateConfig {
    pub fn layout(&self) -> SiteLayout {
        SiteLayout::jittered_grid(self.grid_side, self.grid_jitter, self.layout_seed)
    }

    pub fn plan(&self, master_seed: u64) -> McPlan {
        McPlan {
            replicates: self.replicates,
            layout: self.layout(),
            points_per_curve: self.points_per_curve,
            master_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    /// Basis sizes to fit; `--bases` overrides with a single value.
    pub counts: Vec<usize>,
    /// Interval of the basis; `None` spans the data.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            counts: vec![4],
            lower: None,
            upper: None,
        }
    }
}

impl BasisConfig {
    pub fn spec(&self, count: usize, data: &[SiteSeries]) -> Result<BasisSpec> {
        let span = BasisSpec::spanning(0, data.iter().flat_map(|s| s.times.iter()))?;
        BasisSpec::with_count(
            count,
            self.lower.unwrap_or(span.lower),
            self.upper.unwrap_or(span.upper),
        )
    }
}

/// Time points of predicted curves when the target file gives none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TargetTimes {
    /// `count` evenly spaced points over the basis interval.
    Uniform { count: usize },
    /// The time grid of the nearest observed site.
    NearestSite,
}

impl TargetTimes {
    pub fn times(
        &self,
        basis: &BasisSpec,
        target: Coord,
        observed: &[SiteSeries],
    ) -> Result<Vec<f64>> {
        match *self {
            TargetTimes::Uniform { count } => {
                if count < 2 {
                    return Err(Error::config("uniform target times need at least 2 points"));
                }
                let step = basis.width() / (count - 1) as f64;
                Ok((0..count)
                    .map(|i| {
                        if i + 1 == count {
                            basis.upper
                        } else {
                            basis.lower + step * i as f64
                        }
                    })
                    .collect())
            }
            TargetTimes::NearestSite => {
                let d2 = |c: &Coord| (c[0] - target[0]).powi(2) + (c[1] - target[1]).powi(2);
                observed
                    .iter()
                    .min_by(|a, b| d2(&a.coords).total_cmp(&d2(&b.coords)))
                    .map(|s| s.times.clone())
                    .ok_or_else(|| Error::input("no observed sites"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub target_times: TargetTimes,
    pub include_delta: bool,
    pub include_obs_noise: bool,
    pub mass: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            target_times: TargetTimes::Uniform { count: 250 },
            include_delta: true,
            include_obs_noise: true,
            mass: 0.95,
        }
    }
}

/// Input files; command line flags take precedence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub data: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub raw_hourly: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
    pub basis: BasisConfig,
    pub priors: PriorSpec,
    pub sampler: SamplerConfig,
    pub simulate: SimulateConfig,
    pub predict: PredictConfig,
    pub thresholds: Thresholds,
    pub pm10: Pm10Options,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            threads: None,
            basis: BasisConfig::default(),
            priors: PriorSpec::default(),
            sampler: SamplerConfig::default(),
            simulate: SimulateConfig::default(),
            predict: PredictConfig::default(),
            thresholds: Thresholds::default(),
            pm10: Pm10Options::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| e.context(path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.priors.validate()?;
        self.thresholds.validate()?;
        self.simulate.gap_scheme.validate()?;
        self.simulate.model.validate()?;
        if self.basis.counts.is_empty() || self.basis.counts.contains(&0) {
            return Err(Error::config("basis counts must be non-empty and positive"));
        }
        if let (Some(lo), Some(hi)) = (self.basis.lower, self.basis.upper) {
            BasisSpec::new(0, lo, hi)?;
        }
        if !(self.predict.mass > 0.0 && self.predict.mass < 1.0) {
            return Err(Error::config("predict.mass must lie in (0, 1)"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads must be at least 1"));
        }
        if self.simulate.grid_side == 0 || self.simulate.points_per_curve < 2 {
            return Err(Error::config(
                "simulation needs a grid side of at least 1 and 2 points per curve",
            ));
        }
        for p in [
            &self.paths.data,
            &self.paths.targets,
            &self.paths.raw_hourly,
        ]
        .into_iter()
        .flatten()
        {
            if !p.exists() {
                return Err(Error::config(format!(
                    "path {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}
