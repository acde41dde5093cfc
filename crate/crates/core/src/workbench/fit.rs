use std::time::Instant;

use crate::cases::CaseSeries;
use crate::dynamics::{initialize_region, RegionConfig};
use crate::error::{Error, Result};
use crate::posterior::{ParamLayout, PosteriorModel, RegionData};
use crate::sampler::{diagnose, hmc_run, Diagnostics, PosteriorDraws};

use super::config::{Mode, RunConfig, PROVINCE};
use super::ingest::aggregate_provincial;

/// One posterior with its data, in the shape required by the run mode.
#[derive(Debug, Clone)]
pub struct FitUnit {
    pub label: String,
    pub model: PosteriorModel,
    /// Observed counts inside the fit window, one per modelled region.
    pub observed: Vec<CaseSeries>,
}

/// A fitted unit.
#[derive(Debug, Clone)]
pub struct FittedUnit {
    pub unit: FitUnit,
    pub draws: PosteriorDraws,
    pub diagnostics: Diagnostics,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub mode: Mode,
    pub units: Vec<FittedUnit>,
}

impl FitResult {
    pub fn converged(&self, threshold: f64) -> bool {
        self.units.iter().all(|u| u.diagnostics.converged(threshold))
    }
}

/// Last date of the fit window: the configured end, or the last date all
/// series share.
pub fn fit_end(cfg: &RunConfig, data: &[CaseSeries]) -> Result<chrono::NaiveDate> {
    let last = data
        .iter()
        .filter_map(CaseSeries::end)
        .min()
        .ok_or_else(|| Error::InvalidArgument("no case data".into()))?;
    match cfg.fit_end {
        Some(end) if end > last => Err(Error::Config(format!(
            "fit_end {end} is after the last shared data date {last}"
        ))),
        Some(end) => Ok(end),
        None => Ok(last),
    }
}

/// Build the posterior(s) for the configured mode. `data` must follow the
/// configured region order.
pub fn build_units(cfg: &RunConfig, data: &[CaseSeries]) -> Result<Vec<FitUnit>> {
    let regions = cfg.region_configs();
    if data.len() != regions.len()
        || data.iter().zip(&regions).any(|(s, r)| s.region != r.name)
    {
        return Err(Error::Config(
            "case data regions do not match the configured regions".into(),
        ));
    }
    let end = fit_end(cfg, data)?;
    for s in data {
        if s.start > end {
            return Err(Error::Config(format!(
                "data for {} start {} after the fit window ends {end}",
                s.region, s.start
            )));
        }
    }
    let window: Vec<CaseSeries> = data.iter().map(|s| s.truncated(end)).collect();
    let ctx = cfg.context()?;
    let provincial = cfg
        .initial
        .provincial_state(cfg.provincial_population, &ctx.fixed)?;
    let region_data = |region: &RegionConfig, series: &CaseSeries| {
        RegionData::new(
            region.clone(),
            initialize_region(&provincial, region),
            series,
            &ctx,
        )
    };
    match cfg.mode {
        Mode::Hierarchical => {
            let rd = regions
                .iter()
                .zip(&window)
                .map(|(r, s)| region_data(r, s))
                .collect::<Result<_>>()?;
            Ok(vec![FitUnit {
                label: "hierarchical".into(),
                model: PosteriorModel::new(cfg.priors.clone(), ctx.clone(), rd, true)?,
                observed: window,
            }])
        }
        Mode::PerRegion => regions
            .iter()
            .zip(&window)
            .map(|(r, s)| {
                Ok(FitUnit {
                    label: r.name.clone(),
                    model: PosteriorModel::new(
                        cfg.priors.clone(),
                        ctx.clone(),
                        vec![region_data(r, s)?],
                        false,
                    )?,
                    observed: vec![s.clone()],
                })
            })
            .collect(),
        Mode::Provincial => {
            let pooled = aggregate_provincial(&window, PROVINCE)?;
            let province = cfg.province();
            let rd = region_data(&province, &pooled)?;
            Ok(vec![FitUnit {
                label: PROVINCE.into(),
                model: PosteriorModel::new(cfg.priors.clone(), ctx.clone(), vec![rd], true)?,
                observed: vec![pooled],
            }])
        }
    }
}

pub fn fit(cfg: &RunConfig, data: &[CaseSeries]) -> Result<FitResult> {
    cfg.validate()?;
    let units = build_units(cfg, data)?
        .into_iter()
        .map(|unit| {
            let t = Instant::now();
            let draws = hmc_run(&unit.model, &cfg.sampler)?;
            let diagnostics = diagnose(&draws);
            Ok(FittedUnit {
                unit,
                draws,
                diagnostics,
                seconds: t.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(FitResult {
        mode: cfg.mode,
        units,
    })
}

/// Join per-region fits draw by draw into one vector per draw under a
/// per-region-R0b layout, so that cross-region summaries can be formed.
pub fn combine_units(units: &[(ParamLayout, &PosteriorDraws)]) -> Result<(ParamLayout, Vec<Vec<f64>>)> {
    let first = units
        .first()
        .ok_or_else(|| Error::InvalidArgument("no fits to combine".into()))?;
    if units.len() == 1 {
        return Ok((first.0.clone(), first.1.pooled()));
    }
    let n = first.1.pooled().len();
    let pooled: Vec<Vec<Vec<f64>>> = units.iter().map(|(_, d)| d.pooled()).collect();
    if pooled.iter().any(|p| p.len() != n) || units.iter().any(|(l, _)| l.n_regions() != 1) {
        return Err(Error::InvalidArgument(
            "per-region fits must be single-region with equal draw counts".into(),
        ));
    }
    let layout = ParamLayout::new(
        units.iter().map(|(l, _)| l.regions[0].clone()).collect(),
        first.0.n_f,
        first.0.n_psi,
        false,
    );
    let draws = (0..n)
        .map(|k| pooled.iter().flat_map(|p| p[k].iter().copied()).collect())
        .collect();
    Ok((layout, draws))
}
