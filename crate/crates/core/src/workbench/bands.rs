use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::Calendar;
use crate::dynamics::{integrate, prevalence, SolveSpec};
use crate::error::{Error, Result};
use crate::observation::{expected_cases, sample_nb2};
use crate::posterior::{ParamSet, PosteriorModel};
use crate::schedules::testing_fraction;
use crate::stats::{kde, Band};

/// Daily posterior bands of one quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSeries {
    pub region: String,
    pub dates: Vec<NaiveDate>,
    pub bands: Vec<Band>,
}

impl BandSeries {
    fn from_paths(region: &str, dates: &[NaiveDate], paths: &[Vec<f64>]) -> Result<Self> {
        let bands = (0..dates.len())
            .map(|k| Band::from_draws(&paths.iter().map(|p| p[k]).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        Ok(Self {
            region: region.to_string(),
            dates: dates.to_vec(),
            bands,
        })
    }

    /// Every value multiplied by `factor > 0`.
    pub fn scaled(&self, region: &str, factor: f64) -> Self {
        let s = |b: &Band| Band {
            q05: b.q05 * factor,
            q25: b.q25 * factor,
            mean: b.mean * factor,
            q75: b.q75 * factor,
            q95: b.q95 * factor,
        };
        Self {
            region: region.to_string(),
            dates: self.dates.clone(),
            bands: self.bands.iter().map(s).collect(),
        }
    }

    /// Band on `date`, if covered.
    pub fn at(&self, date: NaiveDate) -> Option<&Band> {
        self.dates.iter().position(|d| *d == date).map(|k| &self.bands[k])
    }
}

/// Prevalence and case bands for one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBands {
    pub prevalence: BandSeries,
    /// Bands of the NB2 mean.
    pub expected_cases: BandSeries,
    /// Posterior-predictive bands: one NB2 count per draw and day.
    pub predicted_cases: BandSeries,
}

impl RegionBands {
    /// Every band multiplied by `factor`, relabelled `region`.
    pub fn scaled(&self, region: &str, factor: f64) -> Self {
        Self {
            prevalence: self.prevalence.scaled(region, factor),
            expected_cases: self.expected_cases.scaled(region, factor),
            predicted_cases: self.predicted_cases.scaled(region, factor),
        }
    }
}

/// Seed of the predictive count draws; the stream is the draw index, so
/// bands do not depend on thread scheduling.
const PREDICTIVE_SEED: u64 = 0x5eed_ca5e;

/// Evenly spaced subset of at most `max` draws.
pub fn thin(draws: &[Vec<f64>], max: usize) -> Vec<Vec<f64>> {
    if draws.len() <= max {
        return draws.to_vec();
    }
    (0..max)
        .map(|k| draws[k * draws.len() / max].clone())
        .collect()
}

/// Per-draw prevalence, expected cases and a predictive count path of
/// region `r` on `dates`.
fn region_paths(
    model: &PosteriorModel,
    p: &ParamSet,
    r: usize,
    dates: &[NaiveDate],
    stream: u64,
) -> Result<[Vec<f64>; 3]> {
    let ctx = &model.ctx;
    let data = &model.data[r];
    let cal: Calendar = ctx.distancing.calendar();
    let last_day = dates.iter().map(|d| cal.day(*d)).max().unwrap_or(0);
    let spec = SolveSpec {
        beta: p.beta_for(r, &ctx.fixed),
        values: &p.regions[r].values,
        sched: &ctx.distancing,
        fixed: &ctx.fixed,
        grid: ctx.grid,
    };
    let traj = integrate(&data.init, 0.0, last_day.max(1) as f64, spec, &data.region)?;
    let mut prev = Vec::with_capacity(dates.len());
    let mut mu = Vec::with_capacity(dates.len());
    let mut counts = Vec::with_capacity(dates.len());
    let mut rng = ChaCha20Rng::seed_from_u64(PREDICTIVE_SEED);
    rng.set_stream(stream);
    for &date in dates {
        let day = cal.day(date);
        prev.push(prevalence(traj.at_day(day)?));
        let psi = testing_fraction(date, &p.regions[r].values.psi, &ctx.testing)?;
        let m = expected_cases(&traj, day, psi, &ctx.kernel, ctx.fixed.k2)?;
        counts.push(sample_nb2(&mut rng, m, p.regions[r].phi)? as f64);
        mu.push(m);
    }
    Ok([prev, mu, counts])
}

/// Bands of prevalence and expected reported cases for every modelled
/// region over `from..=to`, from constrained draws in layout order.
pub fn trajectory_bands(
    model: &PosteriorModel,
    draws: &[Vec<f64>],
    from: NaiveDate,
    to: NaiveDate,
) -> Result<Vec<RegionBands>> {
    if to < from {
        return Err(Error::InvalidArgument(format!("band window {from}..{to} is empty")));
    }
    if draws.is_empty() {
        return Err(Error::InvalidArgument("no draws".into()));
    }
    if from < model.ctx.distancing.model_start() {
        return Err(Error::InvalidArgument(format!(
            "bands cannot start before the model start {}",
            model.ctx.distancing.model_start()
        )));
    }
    let dates = Calendar::dates_between(from, to);
    let params = draws
        .iter()
        .map(|d| ParamSet::from_flat(&model.layout, d))
        .collect::<Result<Vec<_>>>()?;
    (0..model.data.len())
        .map(|r| {
            let paths = params
                .par_iter()
                .enumerate()
                .map(|(i, p)| region_paths(model, p, r, &dates, i as u64))
                .collect::<Result<Vec<_>>>()?;
            let mut split: [Vec<Vec<f64>>; 3] = Default::default();
            for [prev, mu, counts] in paths {
                split[0].push(prev);
                split[1].push(mu);
                split[2].push(counts);
            }
            let name = &model.data[r].region.name;
            Ok(RegionBands {
                prevalence: BandSeries::from_paths(name, &dates, &split[0])?,
                expected_cases: BandSeries::from_paths(name, &dates, &split[1])?,
                predicted_cases: BandSeries::from_paths(name, &dates, &split[2])?,
            })
        })
        .collect()
}

/// Continue every draw's trajectory from `fit_end` to `horizon_end`
/// (inclusive) under the configured schedule, whose final plateau holds
/// after the last transition.
pub fn forecast(
    model: &PosteriorModel,
    draws: &[Vec<f64>],
    fit_end: NaiveDate,
    horizon_end: NaiveDate,
) -> Result<Vec<RegionBands>> {
    if horizon_end < fit_end {
        return Err(Error::InvalidArgument(format!(
            "forecast horizon {horizon_end} is before the end of the fit window {fit_end}"
        )));
    }
    trajectory_bands(model, draws, fit_end, horizon_end)
}

/// Kernel density table `(parameter, value, density)` for every parameter.
pub fn density_tables(
    names: &[String],
    draws: &[Vec<f64>],
    points: usize,
) -> Result<Vec<(String, f64, f64)>> {
    let mut out = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let col: Vec<f64> = draws.iter().map(|d| d[i]).collect();
        if col.iter().all(|v| *v == col[0]) {
            out.push((name.clone(), col[0], f64::INFINITY));
            continue;
        }
        out.extend(kde(&col, points)?.into_iter().map(|(x, d)| (name.clone(), x, d)));
    }
    Ok(out)
}
