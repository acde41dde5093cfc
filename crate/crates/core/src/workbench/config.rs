use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dynamics::{bc_regions, FixedParams, Grid, InitialCondition, RegionConfig, BC_POPULATION};
use crate::error::{Error, Result};
use crate::observation::DelaySpec;
use crate::posterior::{ModelContext, PriorSpec};
use crate::sampler::SamplerConfig;
use crate::schedules::{DistancingSchedule, TestingSchedule};

/// How regions share parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// One R0b shared by all regions.
    Hierarchical,
    /// An independent fit per region, each with its own R0b.
    PerRegion,
    /// A single fit of counts summed over all regions.
    Provincial,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Hierarchical => "hierarchical",
            Mode::PerRegion => "per-region",
            Mode::Provincial => "provincial",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hierarchical" => Ok(Mode::Hierarchical),
            "per-region" => Ok(Mode::PerRegion),
            "provincial" => Ok(Mode::Provincial),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}; expected hierarchical, per-region or provincial"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub name: String,
    pub population: f64,
}

/// Everything a run needs besides the case data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// Last date used for fitting; defaults to the last date in the data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_end: Option<NaiveDate>,
    /// Last forecast date; no forecast when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forecast_end: Option<NaiveDate>,
    /// Population used to seed the epidemic and for the provincial fit.
    pub provincial_population: f64,
    /// Integration step in days; must divide one day.
    pub step: f64,
    /// Posterior draws used for trajectory bands (evenly thinned).
    pub summary_draws: usize,
    /// R-hat threshold for declaring convergence.
    pub rhat_threshold: f64,
    pub regions: Vec<RegionSpec>,
    pub fixed: FixedParams,
    pub initial: InitialCondition,
    pub delay: DelaySpec,
    pub distancing: DistancingSchedule,
    pub testing: TestingSchedule,
    pub priors: PriorSpec,
    pub sampler: SamplerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Hierarchical,
            fit_end: None,
            forecast_end: None,
            provincial_population: BC_POPULATION,
            step: 0.1,
            summary_draws: 1000,
            rhat_threshold: 1.05,
            regions: bc_regions()
                .into_iter()
                .map(|r| RegionSpec {
                    name: r.name,
                    population: r.population,
                })
                .collect(),
            fixed: FixedParams::default(),
            initial: InitialCondition::default(),
            delay: DelaySpec::default(),
            distancing: DistancingSchedule::bc_2020(),
            testing: TestingSchedule::bc_2020(),
            priors: PriorSpec::default(),
            sampler: SamplerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions.is_empty() {
            return Err(Error::Config("no regions configured".into()));
        }
        for (i, r) in self.regions.iter().enumerate() {
            if !(r.population > 0.0) {
                return Err(Error::Config(format!(
                    "region {} needs a positive population",
                    r.name
                )));
            }
            if self.regions[..i].iter().any(|o| o.name == r.name) {
                return Err(Error::Config(format!("region {} listed twice", r.name)));
            }
            if r.name == PROVINCE {
                return Err(Error::Config(format!("region name {PROVINCE:?} is reserved")));
            }
        }
        if !(self.provincial_population > 0.0) {
            return Err(Error::Config("provincial_population must be positive".into()));
        }
        if self.summary_draws == 0 {
            return Err(Error::Config("summary_draws must be positive".into()));
        }
        let violations: Vec<String> = self
            .distancing
            .validate()
            .into_iter()
            .chain(self.testing.validate())
            .map(|v| v.to_string())
            .collect();
        if !violations.is_empty() {
            return Err(Error::InvalidSchedule(violations.join("; ")));
        }
        if self.testing.start() > self.distancing.observation_start() {
            return Err(Error::Config(format!(
                "testing segments start {} after observations begin {}",
                self.testing.start(),
                self.distancing.observation_start()
            )));
        }
        if let (Some(fit), Some(fc)) = (self.fit_end, self.forecast_end) {
            if fc < fit {
                return Err(Error::Config(format!(
                    "forecast_end {fc} is before fit_end {fit}"
                )));
            }
        }
        self.fixed.validate()?;
        self.priors.validate()?;
        self.sampler.validate()?;
        Grid::from_step(self.step)?;
        self.context()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::from_step(self.step)
    }

    pub fn context(&self) -> Result<ModelContext> {
        ModelContext::new(
            self.fixed,
            self.distancing.clone(),
            self.testing.clone(),
            self.delay,
            self.grid()?,
        )
    }

    /// Configured regions with population ratios.
    pub fn region_configs(&self) -> Vec<RegionConfig> {
        self.regions
            .iter()
            .map(|r| RegionConfig::new(r.name.clone(), r.population, self.provincial_population))
            .collect()
    }

    pub fn region_names(&self) -> Vec<String> {
        self.regions.iter().map(|r| r.name.clone()).collect()
    }

    /// The pooled region used in provincial mode.
    pub fn province(&self) -> RegionConfig {
        RegionConfig::new(PROVINCE, self.provincial_population, self.provincial_population)
    }
}

/// Label of the pooled series.
pub const PROVINCE: &str = "province";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_toml("mode = \"provincial\"\n[sampler]\nchains = 2\n").unwrap();
        assert_eq!(cfg.mode, Mode::Provincial);
        assert_eq!(cfg.sampler.chains, 2);
        assert_eq!(cfg.sampler.warmup_iters, 1000);
        assert_eq!(cfg.regions.len(), 5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("moed = \"provincial\"\n").is_err());
    }
}
