//! Synthetic case data from known parameters, and recovery checks.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::calendar::ymd;
use crate::cases::CaseSeries;
use crate::dynamics::{bc_regions, initialize_region, InitialCondition, RegionConfig, BC_POPULATION};
use crate::error::{Error, Result};
use crate::observation::sample_nb2;
use crate::posterior::{ModelContext, ParamLayout, ParamSet, RegionData, RegionParams};
use crate::schedules::PhaseValues;
use crate::stats::quantiles;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionTruth {
    pub region: RegionConfig,
    pub f: Vec<f64>,
    pub psi: Vec<f64>,
    pub phi: f64,
}

/// Known parameters and the observation window to simulate over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub r0b: f64,
    pub regions: Vec<RegionTruth>,
    pub provincial_population: f64,
    pub init: InitialCondition,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl SimScenario {
    /// Five health authorities, shared R0b = 3, observed Mar 1 to Dec 31 2020.
    pub fn bc_2020() -> Self {
        let f = [
            [0.33, 0.72, 0.66, 0.46, 0.79, 0.49],
            [0.42, 0.59, 0.63, 0.63, 0.75, 0.52],
            [0.20, 0.95, 0.52, 0.68, 0.79, 0.62],
            [0.16, 0.79, 0.62, 0.45, 0.99, 0.49],
            [0.32, 0.66, 0.67, 0.39, 0.87, 0.64],
        ];
        let psi = [
            [0.39, 0.42, 0.38, 0.66],
            [0.11, 0.22, 0.26, 0.60],
            [0.02, 0.15, 0.24, 0.70],
            [0.06, 0.10, 0.27, 0.54],
            [0.07, 0.07, 0.22, 0.44],
        ];
        let phi = [8.0, 11.0, 3.0, 8.0, 5.0];
        let regions = bc_regions()
            .into_iter()
            .enumerate()
            .map(|(r, region)| RegionTruth {
                region,
                f: f[r].to_vec(),
                psi: psi[r].to_vec(),
                phi: phi[r],
            })
            .collect();
        Self {
            r0b: 3.0,
            regions,
            provincial_population: BC_POPULATION,
            init: InitialCondition::default(),
            start: ymd(2020, 3, 1),
            end: ymd(2020, 12, 31),
        }
    }

    /// Keep only the named regions, in the given order.
    pub fn restricted(&self, names: &[&str]) -> Result<Self> {
        let regions = names
            .iter()
            .map(|n| {
                self.regions
                    .iter()
                    .find(|r| r.region.name == *n)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown region {n}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            regions,
            ..self.clone()
        })
    }

    pub fn region_names(&self) -> Vec<String> {
        self.regions.iter().map(|r| r.region.name.clone()).collect()
    }

    pub fn layout(&self, n_f: usize, n_psi: usize, share_r0b: bool) -> ParamLayout {
        ParamLayout::new(self.region_names(), n_f, n_psi, share_r0b)
    }

    /// The true parameters, truncated to the first `n_f` phases and
    /// `n_psi` testing segments.
    pub fn truth(&self, layout: &ParamLayout) -> Result<ParamSet> {
        let regions = self
            .regions
            .iter()
            .map(|r| {
                if r.f.len() < layout.n_f || r.psi.len() < layout.n_psi {
                    return Err(Error::InvalidArgument(format!(
                        "region {} has fewer true values than the layout needs",
                        r.region.name
                    )));
                }
                Ok(RegionParams {
                    values: PhaseValues::new(
                        r.f[..layout.n_f].to_vec(),
                        r.psi[..layout.n_psi].to_vec(),
                    )?,
                    phi: r.phi,
                })
            })
            .collect::<Result<_>>()?;
        let r0b = if layout.share_r0b {
            vec![self.r0b]
        } else {
            vec![self.r0b; self.regions.len()]
        };
        let p = ParamSet {
            r0b,
            regions,
            share_r0b: layout.share_r0b,
        };
        layout.check_params(&p)?;
        Ok(p)
    }

    /// Noise-free expected counts per region, one value per day from
    /// `start` to `end`.
    pub fn expected_means(&self, ctx: &ModelContext) -> Result<Vec<Vec<f64>>> {
        let provincial = self
            .init
            .provincial_state(self.provincial_population, &ctx.fixed)?;
        let n_days = (self.end - self.start).num_days() + 1;
        if n_days <= 0 {
            return Err(Error::InvalidArgument("simulation window is empty".into()));
        }
        let beta = self.r0b / ctx.fixed.generation_scale();
        let n_f = ctx.distancing.n_phases();
        let n_psi = ctx.testing.n_segments();
        self.regions
            .iter()
            .map(|truth| {
                if truth.f.len() < n_f || truth.psi.len() < n_psi {
                    return Err(Error::InvalidArgument(format!(
                        "region {} has fewer true values than the schedules need",
                        truth.region.name
                    )));
                }
                let blank =
                    CaseSeries::new(truth.region.name.clone(), self.start, vec![0; n_days as usize]);
                let init = initialize_region(&provincial, &truth.region);
                let data = RegionData::new(truth.region.clone(), init, &blank, ctx)?;
                let values =
                    PhaseValues::new(truth.f[..n_f].to_vec(), truth.psi[..n_psi].to_vec())?;
                data.expected_counts(ctx, beta, &values)
            })
            .collect()
    }
}

/// NB2 case counts drawn around the scenario's expected counts.
pub fn simulate_cases(scenario: &SimScenario, ctx: &ModelContext, seed: u64) -> Result<Vec<CaseSeries>> {
    let means = scenario.expected_means(ctx)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    scenario
        .regions
        .iter()
        .zip(means)
        .map(|(truth, mu)| {
            let counts = mu
                .iter()
                .map(|&m| sample_nb2(&mut rng, m, truth.phi))
                .collect::<Result<_>>()?;
            Ok(CaseSeries::new(truth.region.name.clone(), scenario.start, counts))
        })
        .collect()
}

/// Whether a central credible interval covers the true value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub name: String,
    pub truth: f64,
    pub lower: f64,
    pub upper: f64,
    pub covered: bool,
}

/// Coverage of each parameter by its central `level` interval. `draws`
/// holds constrained parameter vectors in layout order.
pub fn recovery_report(
    layout: &ParamLayout,
    draws: &[Vec<f64>],
    truth: &ParamSet,
    level: f64,
) -> Result<Vec<RecoveryRow>> {
    if draws.is_empty() {
        return Err(Error::InvalidArgument("no draws".into()));
    }
    let tail = 0.5 * (1.0 - level);
    let true_flat = truth.to_flat(layout);
    layout
        .names()
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let column: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            let q = quantiles(&column, &[tail, 1.0 - tail])?;
            let t = true_flat[i];
            Ok(RecoveryRow {
                name,
                truth: t,
                lower: q[0],
                upper: q[1],
                covered: q[0] <= t && t <= q[1],
            })
        })
        .collect()
}
