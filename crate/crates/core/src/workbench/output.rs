use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::bands::{BandSeries, RegionBands};
use crate::cases::CaseSeries;
use crate::error::{Error, Result};
use crate::sampler::{Chain, Diagnostics, PosteriorDraws};
use crate::stats::quantiles;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn finish<W: std::io::Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// `chain,iteration,<parameters>` with full precision.
pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend(draws.names.iter().cloned());
    w.write_record(&header)?;
    for (c, chain) in draws.chains.iter().enumerate() {
        for (it, d) in chain.draws.iter().enumerate() {
            let mut rec = vec![c.to_string(), it.to_string()];
            rec.extend(d.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    finish(w, path)
}

/// Per-iteration sampler statistics.
pub fn write_sampler_stats(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "chain",
        "iteration",
        "accept_stat",
        "divergent",
        "n_leapfrog",
        "step_size",
        "log_density",
    ])?;
    for (c, chain) in draws.chains.iter().enumerate() {
        for it in 0..chain.accept_stat.len() {
            w.write_record([
                c.to_string(),
                it.to_string(),
                chain.accept_stat[it].to_string(),
                u8::from(chain.divergent[it]).to_string(),
                chain.n_leapfrog[it].to_string(),
                chain.step_size[it].to_string(),
                chain.log_density[it].to_string(),
            ])?;
        }
    }
    finish(w, path)
}

/// Read a draws file written by [`write_draws`]. Sampler statistics are
/// not restored.
pub fn read_draws(path: &Path) -> Result<PosteriorDraws> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    })?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header.len() < 3 || header[0] != "chain" || header[1] != "iteration" {
        return Err(Error::Config(format!(
            "{} is not a draws file (expected chain,iteration,...)",
            path.display()
        )));
    }
    let names = header[2..].to_vec();
    let mut chains: Vec<Chain> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |m: String| Error::Ingest {
            path: path.to_path_buf(),
            line,
            message: m,
        };
        let c: usize = rec[0].parse().map_err(|_| bad(format!("bad chain {:?}", &rec[0])))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad value {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != names.len() {
            return Err(bad("wrong number of columns".into()));
        }
        while chains.len() <= c {
            chains.push(Chain {
                seed: 0,
                stream: chains.len() as u64,
                draws: Vec::new(),
                accept_stat: Vec::new(),
                divergent: Vec::new(),
                n_leapfrog: Vec::new(),
                step_size: Vec::new(),
                inv_metric: Vec::new(),
                log_density: Vec::new(),
            });
        }
        chains[c].draws.push(values);
    }
    Ok(PosteriorDraws { names, chains })
}

pub fn write_diagnostics(path: &Path, d: &Diagnostics) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["parameter", "rhat", "ess", "degenerate", "mean", "sd"])?;
    let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.6}"));
    for p in &d.params {
        w.write_record([
            p.name.clone(),
            opt(p.rhat),
            opt(p.ess),
            p.degenerate.to_string(),
            format!("{:.6}", p.mean),
            format!("{:.6}", p.sd),
        ])?;
    }
    finish(w, path)
}

/// Long-format trace table for trace plots.
pub fn write_trace(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["iteration", "chain", "parameter", "value"])?;
    for row in draws.trace_rows() {
        w.write_record([
            row.iteration.to_string(),
            row.chain.to_string(),
            row.parameter,
            row.value.to_string(),
        ])?;
    }
    finish(w, path)
}

/// `date,[observed,]q05,q25,mean,q75,q95`.
pub fn write_bands(path: &Path, bands: &BandSeries, observed: Option<&CaseSeries>) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["date"];
    if observed.is_some() {
        header.push("observed");
    }
    header.extend(["q05", "q25", "mean", "q75", "q95"]);
    w.write_record(&header)?;
    for (date, b) in bands.dates.iter().zip(&bands.bands) {
        let mut rec = vec![date.to_string()];
        if let Some(obs) = observed {
            let k = (*date - obs.start).num_days();
            let v = usize::try_from(k)
                .ok()
                .and_then(|k| obs.counts.get(k))
                .map_or(String::new(), |c| c.to_string());
            rec.push(v);
        }
        rec.extend([b.q05, b.q25, b.mean, b.q75, b.q95].map(|v| format!("{v:.6}")));
        w.write_record(&rec)?;
    }
    finish(w, path)
}

/// `date,quantity,q05,q25,mean,q75,q95` for prevalence, expected and
/// predicted cases.
pub fn write_forecast(path: &Path, bands: &RegionBands) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["date", "quantity", "q05", "q25", "mean", "q75", "q95"])?;
    for (label, series) in [
        ("prevalence", &bands.prevalence),
        ("expected_cases", &bands.expected_cases),
        ("predicted_cases", &bands.predicted_cases),
    ] {
        for (date, b) in series.dates.iter().zip(&series.bands) {
            let mut rec = vec![date.to_string(), label.to_string()];
            rec.extend([b.q05, b.q25, b.mean, b.q75, b.q95].map(|v| format!("{v:.6}")));
            w.write_record(&rec)?;
        }
    }
    finish(w, path)
}

pub fn write_densities(path: &Path, rows: &[(String, f64, f64)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["parameter", "value", "density"])?;
    for (name, x, d) in rows {
        w.write_record([name.clone(), format!("{x:.6}"), format!("{d:.6e}")])?;
    }
    finish(w, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(create(path)?, value)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Posterior summary of one parameter for the run summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

pub fn param_summaries(draws: &PosteriorDraws, d: &Diagnostics) -> Result<Vec<ParamSummary>> {
    let pooled = draws.pooled();
    d.params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let col: Vec<f64> = pooled.iter().map(|x| x[i]).collect();
            let q = quantiles(&col, &[0.05, 0.95])?;
            Ok(ParamSummary {
                name: p.name.clone(),
                mean: p.mean,
                q05: q[0],
                q95: q[1],
                rhat: p.rhat,
                ess: p.ess,
            })
        })
        .collect()
}

/// `<dir>/<stem>_<region>.csv`.
pub fn region_file(dir: &Path, stem: &str, region: &str) -> PathBuf {
    dir.join(format!("{stem}_{region}.csv"))
}
