//! Basic and regionalized reproduction numbers and their posterior summaries.

use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{FixedParams, RegionConfig};
use crate::error::{Error, Result};
use crate::posterior::{ParamLayout, ParamSet};
use crate::schedules::{contact_fraction, DistancingSchedule};
use crate::stats::{mean, quantiles};

/// Reference coefficients `(c0, c1, c2)` of `R0(f) = beta (c0 + c1 f + c2 f^2)`
/// for the default fixed parameters. They disagree with
/// [`quadratic_coefficients`], which follows from [`r0_regional`].
pub const REFERENCE_QUADRATIC: [f64; 3] = [0.151932, 1.3628, 3.48527];

/// `R0b = beta (D + 1/k2)`.
pub fn r0_basic(beta: f64, fixed: &FixedParams) -> f64 {
    beta * fixed.generation_scale()
}

/// Regionalized reproduction number for contact fraction `f`, from the
/// six-term next-generation expression with `e = ud / (ur + ud)`.
pub fn r0_regional(beta: f64, f: f64, fixed: &FixedParams) -> f64 {
    beta * r0_regional_per_beta(f, fixed)
}

fn r0_regional_per_beta(f: f64, p: &FixedParams) -> f64 {
    let e = p.distancing_fraction();
    let (k1, k2) = (p.k1, p.k2);
    let gamma = 1.0 / p.d + p.q;
    let ek = (e * k1 + 1.0) * (e * k2 + 1.0);
    let mix = e * f + 1.0 - e;
    let mix2 = mix * mix;
    e.powi(4) * (1.0 - e) * (1.0 - f).powi(2) * k1 * k2 / ((e * gamma + 1.0) * ek)
        + mix2 / gamma
        + e * k1 * mix2 / (k2 * ek)
        + e * mix2 / ek
        + mix2 / (k2 * ek)
        + e * e * k1 * (e * f * f + 1.0 - e) / ek
}

/// Exact quadratic coefficients `(c0, c1, c2)` of [`r0_regional`] per unit
/// `beta`, read off by evaluating at `f = 0, 1/2, 1`.
pub fn quadratic_coefficients(fixed: &FixedParams) -> [f64; 3] {
    let a = r0_regional_per_beta(0.0, fixed);
    let b = r0_regional_per_beta(0.5, fixed);
    let c = r0_regional_per_beta(1.0, fixed);
    let c2 = 2.0 * (a - 2.0 * b + c);
    let c1 = c - a - c2;
    [a, c1, c2]
}

/// Evaluate `beta (c0 + c1 f + c2 f^2)`.
pub fn r0_quadratic(beta: f64, f: f64, coefficients: [f64; 3]) -> f64 {
    let [c0, c1, c2] = coefficients;
    beta * (c0 + c1 * f + c2 * f * f)
}

/// Posterior mean and central 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn from_draws(x: &[f64]) -> Result<Self> {
        let q = quantiles(x, &[0.025, 0.975])?;
        Ok(Self {
            mean: mean(x),
            lower: q[0],
            upper: q[1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R0Row {
    pub label: String,
    pub cells: Vec<Interval>,
}

/// Reproduction numbers per region and contact phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R0Summary {
    /// Column labels `f2`, `f3`, ...
    pub phases: Vec<String>,
    pub regions: Vec<R0Row>,
    /// Population-weighted average of the regional rows, absent when there
    /// are none.
    pub weighted: Option<R0Row>,
    pub provincial: Option<R0Row>,
}

/// Per-draw reproduction numbers `[draw][region][phase]`.
fn r0_draws(
    layout: &ParamLayout,
    draws: &[Vec<f64>],
    fixed: &FixedParams,
) -> Result<Vec<Vec<Vec<f64>>>> {
    draws
        .par_iter()
        .map(|d| {
            let p = ParamSet::from_flat(layout, d)?;
            Ok((0..layout.n_regions())
                .map(|r| {
                    let beta = p.beta_for(r, fixed);
                    p.regions[r]
                        .values
                        .f
                        .iter()
                        .map(|f| r0_regional(beta, *f, fixed))
                        .collect()
                })
                .collect())
        })
        .collect()
}

fn summarize_row(label: &str, per_draw: &[Vec<f64>], n_phases: usize) -> Result<R0Row> {
    let cells = (0..n_phases)
        .map(|j| Interval::from_draws(&per_draw.iter().map(|d| d[j]).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    Ok(R0Row {
        label: label.to_string(),
        cells,
    })
}

/// Summaries over draws (constrained vectors in `layout` order). Regions
/// must match the layout's region order. The population-weighted row is
/// formed draw by draw before summarizing. `provincial` holds draws of a
/// single-region fit of pooled counts.
pub fn r0_table(
    layout: &ParamLayout,
    draws: &[Vec<f64>],
    regions: &[RegionConfig],
    fixed: &FixedParams,
    provincial: Option<(&ParamLayout, &[Vec<f64>])>,
) -> Result<R0Summary> {
    if draws.is_empty() {
        return Err(Error::InvalidArgument("no draws".into()));
    }
    if regions.len() != layout.n_regions()
        || regions.iter().zip(&layout.regions).any(|(a, b)| a.name != *b)
    {
        return Err(Error::InvalidArgument(
            "region list does not match the parameter layout".into(),
        ));
    }
    let n_f = layout.n_f;
    let all = r0_draws(layout, draws, fixed)?;
    let rows = (0..layout.n_regions())
        .map(|r| {
            let per_draw: Vec<Vec<f64>> = all.iter().map(|d| d[r].clone()).collect();
            summarize_row(&regions[r].name, &per_draw, n_f)
        })
        .collect::<Result<Vec<_>>>()?;
    let total_weight: f64 = regions.iter().map(|r| r.population_ratio).sum();
    let weighted_draws: Vec<Vec<f64>> = all
        .iter()
        .map(|d| {
            (0..n_f)
                .map(|j| {
                    regions
                        .iter()
                        .zip(d)
                        .map(|(reg, v)| reg.population_ratio * v[j])
                        .sum::<f64>()
                        / total_weight
                })
                .collect()
        })
        .collect();
    let weighted = summarize_row("weighted average", &weighted_draws, n_f)?;
    let provincial = provincial
        .map(|(pl, pd)| {
            if pl.n_regions() != 1 || pl.n_f != n_f {
                return Err(Error::InvalidArgument(
                    "provincial draws must come from a single-region fit with the same phases"
                        .into(),
                ));
            }
            let per: Vec<Vec<f64>> = r0_draws(pl, pd, fixed)?
                .into_iter()
                .map(|d| d[0].clone())
                .collect();
            summarize_row("province", &per, n_f)
        })
        .transpose()?;
    Ok(R0Summary {
        phases: (0..n_f).map(|j| format!("f{}", j + 2)).collect(),
        regions: rows,
        weighted: Some(weighted),
        provincial,
    })
}

impl R0Summary {
    /// Wide CSV: one row per region, `mean`, `lower`, `upper` per phase.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["region".to_string()];
        for p in &self.phases {
            header.extend([format!("{p}_mean"), format!("{p}_lower"), format!("{p}_upper")]);
        }
        out.write_record(&header)?;
        let rows = self
            .regions
            .iter()
            .chain(self.weighted.iter())
            .chain(self.provincial.iter());
        for row in rows {
            let mut rec = vec![row.label.clone()];
            for c in &row.cells {
                rec.extend([c.mean, c.lower, c.upper].map(|v| format!("{v:.6}")));
            }
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("r0 table", e))?;
        Ok(())
    }
}

/// Posterior mean and 95% interval of `R0(t)` for region `region` on each date.
pub fn r0_timeseries(
    layout: &ParamLayout,
    draws: &[Vec<f64>],
    region: usize,
    sched: &DistancingSchedule,
    fixed: &FixedParams,
    dates: &[NaiveDate],
) -> Result<Vec<(NaiveDate, Interval)>> {
    if region >= layout.n_regions() {
        return Err(Error::InvalidArgument(format!("no region with index {region}")));
    }
    let params = draws
        .iter()
        .map(|d| ParamSet::from_flat(layout, d))
        .collect::<Result<Vec<_>>>()?;
    let cal = sched.calendar();
    dates
        .par_iter()
        .map(|&date| {
            let t = cal.time(date);
            let values: Vec<f64> = params
                .iter()
                .map(|p| {
                    let f = contact_fraction(t, &p.regions[region].values.f, sched);
                    r0_regional(p.beta_for(region, fixed), f, fixed)
                })
                .collect();
            Ok((date, Interval::from_draws(&values)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_number_examples() {
        let p = FixedParams::default();
        assert!((r0_basic(0.5, &p) - 3.0).abs() < 1e-12);
        assert_eq!(r0_basic(0.0, &p), 0.0);
        assert!((r0_basic(2.6 / 6.0, &p) - 2.6).abs() < 1e-12);
    }

    #[test]
    fn full_contact_leaves_only_quarantine() {
        let p = FixedParams::default();
        for beta in [0.1, 0.5, 1.3] {
            let r = r0_regional(beta, 1.0, &p);
            assert!((r / (5.0 * beta) - 1.0).abs() < 1e-12, "{r}");
        }
    }

    #[test]
    fn quadratic_coefficients_reproduce_the_expression() {
        let p = FixedParams::default();
        let c = quadratic_coefficients(&p);
        for k in 0..=20 {
            let f = k as f64 / 20.0;
            let direct = r0_regional(0.7, f, &p);
            assert!((r0_quadratic(0.7, f, c) - direct).abs() < 1e-12 * direct);
        }
    }
}
