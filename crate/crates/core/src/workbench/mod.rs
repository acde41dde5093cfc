//! Run configuration, data ingestion, fitting in the three modes, and
//! file outputs for every command.

pub mod bands;
pub mod config;
pub mod fit;
pub mod ingest;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use serde::Serialize;

pub use bands::{density_tables, forecast, thin, trajectory_bands, BandSeries, RegionBands};
pub use config::{Mode, RegionSpec, RunConfig, PROVINCE};
pub use fit::{build_units, combine_units, fit, fit_end, FitResult, FitUnit, FittedUnit};
pub use ingest::{aggregate_provincial, ingest, write_cases};

use crate::cases::CaseSeries;
use crate::error::{Error, Result};
use crate::posterior::ParamLayout;
use crate::reproduction::{r0_table, R0Summary};
use crate::sampler::{diagnose, Diagnostics, PosteriorDraws};
use crate::simstudy::{simulate_cases, SimScenario};
use output::*;

pub const CONFIG_FILE: &str = "resolved_config.toml";
pub const DATA_FILE: &str = "cases.csv";
pub const DRAWS_FILE: &str = "draws.csv";

const DENSITY_POINTS: usize = 128;

#[derive(Debug, Clone, Serialize)]
pub struct UnitReport {
    pub label: String,
    pub seconds: f64,
    pub draws: usize,
    pub divergent: usize,
    pub max_rhat: Option<f64>,
    pub min_ess: Option<f64>,
    pub mean_accept: Vec<f64>,
    pub step_size: Vec<f64>,
    pub converged: bool,
    pub params: Vec<ParamSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub seed: u64,
    pub fit_end: NaiveDate,
    pub forecast_end: Option<NaiveDate>,
    pub rhat_threshold: f64,
    pub converged: bool,
    pub seconds: f64,
    pub units: Vec<UnitReport>,
    pub notes: Vec<String>,
}

fn unit_dir(out: &Path, units: usize, label: &str) -> PathBuf {
    if units == 1 {
        out.to_path_buf()
    } else {
        out.join(label)
    }
}

fn unit_report(u: &FittedUnit, threshold: f64) -> Result<UnitReport> {
    let d = &u.diagnostics;
    Ok(UnitReport {
        label: u.unit.label.clone(),
        seconds: u.seconds,
        draws: u.draws.n_chains() * u.draws.n_iters(),
        divergent: d.divergent,
        max_rhat: d.max_rhat(),
        min_ess: d.params.iter().filter_map(|p| p.ess).reduce(f64::min),
        mean_accept: d.mean_accept.clone(),
        step_size: d.step_size.clone(),
        converged: d.converged(threshold),
        params: param_summaries(&u.draws, d)?,
    })
}

/// Fit and write every artifact to `out`. Returns the summary; callers
/// decide how to treat non-convergence.
pub fn run_fit(cfg: &RunConfig, data: &[CaseSeries], out: &Path) -> Result<RunSummary> {
    let t = Instant::now();
    write_text(&out.join(CONFIG_FILE), &cfg.to_toml()?)?;
    write_cases(data, create_file(&out.join(DATA_FILE))?)?;
    let result = fit(cfg, data)?;
    let end = fit_end(cfg, data)?;
    let n_units = result.units.len();
    for u in &result.units {
        let dir = unit_dir(out, n_units, &u.unit.label);
        write_unit_files(&dir, &u.draws, &u.diagnostics)?;
    }
    let mut notes = write_derived(cfg, &result.units, end, out)?;
    let converged = result.converged(cfg.rhat_threshold);
    if !converged {
        notes.push(format!(
            "not converged: some R-hat is at least {} or a parameter is degenerate",
            cfg.rhat_threshold
        ));
    }
    let summary = RunSummary {
        mode: cfg.mode,
        seed: cfg.sampler.seed,
        fit_end: end,
        forecast_end: cfg.forecast_end,
        rhat_threshold: cfg.rhat_threshold,
        converged,
        seconds: t.elapsed().as_secs_f64(),
        units: result
            .units
            .iter()
            .map(|u| unit_report(u, cfg.rhat_threshold))
            .collect::<Result<_>>()?,
        notes,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

fn create_file(path: &Path) -> Result<std::fs::File> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_unit_files(dir: &Path, draws: &PosteriorDraws, d: &Diagnostics) -> Result<()> {
    write_draws(&dir.join(DRAWS_FILE), draws)?;
    if draws.chains.iter().any(|c| !c.accept_stat.is_empty()) {
        write_sampler_stats(&dir.join("sampler_stats.csv"), draws)?;
    }
    write_diagnostics(&dir.join("diagnostics.csv"), d)?;
    write_trace(&dir.join("trace.csv"), draws)?;
    let pooled = draws.pooled();
    write_densities(
        &dir.join("densities.csv"),
        &density_tables(&draws.names, &pooled, DENSITY_POINTS)?,
    )?;
    Ok(())
}

/// Bands, forecasts and the reproduction-number table.
fn write_derived(
    cfg: &RunConfig,
    units: &[FittedUnit],
    fit_end: NaiveDate,
    out: &Path,
) -> Result<Vec<String>> {
    let mut notes = Vec::new();
    let obs_start = cfg.distancing.observation_start();
    for u in units {
        let draws = thin(&u.draws.pooled(), cfg.summary_draws);
        let in_sample = trajectory_bands(&u.unit.model, &draws, obs_start, fit_end)?;
        for (b, observed) in in_sample.iter().zip(&u.unit.observed) {
            let region = &b.prevalence.region;
            write_bands(&region_file(out, "prevalence_bands", region), &b.prevalence, None)?;
            write_bands(
                &region_file(out, "expected_cases", region),
                &b.expected_cases,
                Some(observed),
            )?;
            write_bands(
                &region_file(out, "predicted_cases", region),
                &b.predicted_cases,
                Some(observed),
            )?;
        }
        if let Some(horizon) = cfg.forecast_end {
            write_forecasts(cfg, &forecast(&u.unit.model, &draws, fit_end, horizon)?, out)?;
        }
    }
    match r0_summary(cfg, units, None) {
        Ok(table) => table.write_csv(create_file(&out.join("r0_table.csv"))?)?,
        Err(e) => notes.push(format!("no reproduction-number table: {e}")),
    }
    if cfg.mode != Mode::Provincial {
        notes.push("r0_table.csv has no provincial row; pass a provincial fit to the r0 command to add it".into());
    }
    Ok(notes)
}

/// One forecast file per modelled region; a provincial forecast is also
/// written scaled to every configured region.
fn write_forecasts(cfg: &RunConfig, fc: &[RegionBands], out: &Path) -> Result<()> {
    for b in fc {
        write_forecast(&region_file(out, "forecast", &b.prevalence.region), b)?;
    }
    if cfg.mode == Mode::Provincial {
        for (region, share) in population_shares(cfg) {
            write_forecast(&region_file(out, "forecast", &region), &fc[0].scaled(&region, share))?;
        }
    }
    Ok(())
}

/// Each configured region's share of the summed regional population.
pub fn population_shares(cfg: &RunConfig) -> Vec<(String, f64)> {
    let total: f64 = cfg.regions.iter().map(|r| r.population).sum();
    cfg.regions
        .iter()
        .map(|r| (r.name.clone(), r.population / total))
        .collect()
}

/// Reproduction-number table for fitted units, optionally with a
/// provincial row from a separate provincial fit.
pub fn r0_summary(
    cfg: &RunConfig,
    units: &[FittedUnit],
    provincial: Option<(&ParamLayout, &[Vec<f64>])>,
) -> Result<R0Summary> {
    let parts: Vec<(ParamLayout, &PosteriorDraws)> = units
        .iter()
        .map(|u| (u.unit.model.layout.clone(), &u.draws))
        .collect();
    let (layout, draws) = combine_units(&parts)?;
    let regions: Vec<_> = units
        .iter()
        .flat_map(|u| u.unit.model.data.iter().map(|d| d.region.clone()))
        .collect();
    if cfg.mode == Mode::Provincial {
        // the provincial fit is itself the final row; regional rows are absent
        let mut t = r0_table(&layout, &draws, &regions, &cfg.fixed, None)?;
        return Ok(R0Summary {
            provincial: t.regions.pop(),
            regions: Vec::new(),
            weighted: None,
            ..t
        });
    }
    r0_table(&layout, &draws, &regions, &cfg.fixed, provincial)
}

/// Reload the units of a finished fit directory.
pub fn load_fit(dir: &Path, data: Option<&Path>) -> Result<(RunConfig, Vec<FittedUnit>)> {
    let cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let data_path = data.map_or_else(|| dir.join(DATA_FILE), Path::to_path_buf);
    let series = ingest(&data_path, &cfg.region_names())?;
    let units = build_units(&cfg, &series)?;
    let n = units.len();
    let fitted = units
        .into_iter()
        .map(|unit| {
            let draws = output::read_draws(&unit_dir(dir, n, &unit.label).join(DRAWS_FILE))?;
            if draws.names != unit.model.layout.names() {
                return Err(Error::Config(format!(
                    "draws for {} do not match the configured parameters",
                    unit.label
                )));
            }
            let diagnostics = diagnose(&draws);
            Ok(FittedUnit {
                unit,
                draws,
                diagnostics,
                seconds: 0.0,
            })
        })
        .collect::<Result<_>>()?;
    Ok((cfg, fitted))
}

/// Recompute bands and density tables for a fit directory into `out`.
pub fn summarize_fit(dir: &Path, data: Option<&Path>, out: &Path) -> Result<()> {
    let (cfg, units) = load_fit(dir, data)?;
    let series = ingest(&data.map_or_else(|| dir.join(DATA_FILE), Path::to_path_buf), &cfg.region_names())?;
    let end = fit_end(&cfg, &series)?;
    let obs_start = cfg.distancing.observation_start();
    let n = units.len();
    for u in &units {
        let draws = thin(&u.draws.pooled(), cfg.summary_draws);
        for (b, observed) in trajectory_bands(&u.unit.model, &draws, obs_start, end)?
            .iter()
            .zip(&u.unit.observed)
        {
            let region = &b.prevalence.region;
            write_bands(&region_file(out, "prevalence_bands", region), &b.prevalence, None)?;
            write_bands(
                &region_file(out, "expected_cases", region),
                &b.expected_cases,
                Some(observed),
            )?;
            write_bands(
                &region_file(out, "predicted_cases", region),
                &b.predicted_cases,
                Some(observed),
            )?;
        }
        write_densities(
            &unit_dir(out, n, &u.unit.label).join("densities.csv"),
            &density_tables(&u.draws.names, &u.draws.pooled(), DENSITY_POINTS)?,
        )?;
    }
    Ok(())
}

/// Forecast from a fit directory up to `horizon`.
pub fn forecast_fit(dir: &Path, data: Option<&Path>, horizon: NaiveDate, out: &Path) -> Result<()> {
    let (cfg, units) = load_fit(dir, data)?;
    let series = ingest(&data.map_or_else(|| dir.join(DATA_FILE), Path::to_path_buf), &cfg.region_names())?;
    let end = fit_end(&cfg, &series)?;
    for u in &units {
        let draws = thin(&u.draws.pooled(), cfg.summary_draws);
        write_forecasts(&cfg, &forecast(&u.unit.model, &draws, end, horizon)?, out)?;
    }
    Ok(())
}

/// Write `r0_table.csv` for a fit directory, with a provincial row when a
/// provincial fit directory is given.
pub fn r0_fit(dir: &Path, provincial: Option<&Path>, out: &Path) -> Result<R0Summary> {
    let (cfg, units) = load_fit(dir, None)?;
    let prov = provincial.map(|p| load_fit(p, None)).transpose()?;
    let prov_parts = match &prov {
        Some((pcfg, punits)) => {
            if pcfg.mode != Mode::Provincial {
                return Err(Error::Config(format!(
                    "{} is a {} fit, not a provincial one",
                    provincial.unwrap().display(),
                    pcfg.mode
                )));
            }
            Some((punits[0].unit.model.layout.clone(), punits[0].draws.pooled()))
        }
        None => None,
    };
    let table = r0_summary(
        &cfg,
        &units,
        prov_parts.as_ref().map(|(l, d)| (l, d.as_slice())),
    )?;
    table.write_csv(create_file(&out.join("r0_table.csv"))?)?;
    Ok(table)
}

/// Recompute diagnostics and trace tables for a fit directory.
pub fn diagnose_fit(dir: &Path, out: &Path) -> Result<Vec<(String, Diagnostics)>> {
    let (_, units) = load_fit(dir, None)?;
    let n = units.len();
    units
        .into_iter()
        .map(|u| {
            let udir = unit_dir(out, n, &u.unit.label);
            write_diagnostics(&udir.join("diagnostics.csv"), &u.diagnostics)?;
            write_trace(&udir.join("trace.csv"), &u.draws)?;
            Ok((u.unit.label, u.diagnostics))
        })
        .collect()
}

/// Simulate case counts from the built-in 2020 truth for the configured
/// regions (populations and schedules from `cfg`) up to `end`, writing
/// `cases.csv`, `truth.csv` and the resolved config to `out`.
pub fn run_simulate(
    cfg: &RunConfig,
    seed: u64,
    end: Option<NaiveDate>,
    out: &Path,
) -> Result<Vec<CaseSeries>> {
    cfg.validate()?;
    let names = cfg.region_names();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut scenario = SimScenario::bc_2020().restricted(&refs)?;
    for (truth, region) in scenario.regions.iter_mut().zip(cfg.region_configs()) {
        truth.region = region;
    }
    scenario.provincial_population = cfg.provincial_population;
    scenario.init = cfg.initial.clone();
    scenario.start = cfg.distancing.observation_start();
    if let Some(end) = end {
        scenario.end = end;
    }
    let ctx = cfg.context()?;
    let series = simulate_cases(&scenario, &ctx, seed)?;
    let layout = scenario.layout(
        ctx.distancing.n_phases(),
        ctx.testing.n_segments(),
        cfg.mode == Mode::Hierarchical,
    );
    let truth = scenario.truth(&layout)?.to_flat(&layout);
    let mut resolved = cfg.clone();
    resolved.sampler.seed = seed;
    write_text(&out.join(CONFIG_FILE), &resolved.to_toml()?)?;
    write_cases(&series, create_file(&out.join(DATA_FILE))?)?;
    let mut text = String::from("parameter,value\n");
    for (name, v) in layout.names().iter().zip(truth) {
        text.push_str(&format!("{name},{v}\n"));
    }
    write_text(&out.join("truth.csv"), &text)?;
    Ok(series)
}
