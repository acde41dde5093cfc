//! Python bindings: configuration, simulation, posterior evaluation,
//! reproduction numbers and the fitting workbench.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use regseiqr::observation::nb2_log_pmf;
use regseiqr::posterior::PosteriorModel;
use regseiqr::reproduction;
use regseiqr::sampler::Target;
use regseiqr::workbench::{self, build_units, ingest, RunConfig};

fn to_py(e: regseiqr::Error) -> PyErr {
    match e {
        regseiqr::Error::Io { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Run configuration, held as a validated TOML document.
#[pyclass(name = "Config")]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    /// Defaults, or the given TOML text with defaults filled in.
    #[new]
    #[pyo3(signature = (toml=None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(t) => RunConfig::from_toml(t).map_err(to_py)?,
            None => RunConfig::default(),
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = RunConfig::load(&path).map_err(to_py)?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(to_py)
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }

    #[setter]
    fn set_mode(&mut self, mode: &str) -> PyResult<()> {
        self.inner.mode = mode.parse().map_err(to_py)?;
        Ok(())
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.sampler.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.sampler.seed = seed;
    }

    #[getter]
    fn regions(&self) -> Vec<String> {
        self.inner.region_names()
    }

    /// Sampler sizes: chains, warmup and sampling iterations.
    fn set_sampler(&mut self, chains: usize, warmup: usize, sampling: usize) -> PyResult<()> {
        let mut s = self.inner.sampler.clone();
        s.chains = chains;
        s.warmup_iters = warmup;
        s.sampling_iters = sampling;
        s.validate().map_err(to_py)?;
        self.inner.sampler = s;
        Ok(())
    }
}

/// Log posterior of one fit unit on the unconstrained scale.
#[pyclass(name = "Posterior")]
struct PyPosterior {
    model: PosteriorModel,
}

#[pymethods]
impl PyPosterior {
    /// The posterior of `config` given the cases at `data`. Per-region
    /// mode has one posterior per region; `unit` selects it.
    #[new]
    #[pyo3(signature = (config, data, unit=0))]
    fn new(config: &PyConfig, data: PathBuf, unit: usize) -> PyResult<Self> {
        let series = ingest(&data, &config.inner.region_names()).map_err(to_py)?;
        let mut units = build_units(&config.inner, &series).map_err(to_py)?;
        if unit >= units.len() {
            return Err(PyValueError::new_err(format!(
                "unit {unit} out of range; this mode has {} units",
                units.len()
            )));
        }
        Ok(Self {
            model: units.swap_remove(unit).model,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.model.dim()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.model.layout.names()
    }

    fn log_density(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check(&x)?;
        Ok(self.model.log_posterior(&x))
    }

    /// `(log density, gradient)` at unconstrained `x`.
    fn log_density_and_gradient(&self, x: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
        self.check(&x)?;
        self.model.log_posterior_and_gradient(&x).map_err(to_py)
    }

    /// Natural-scale parameters in name order.
    fn constrain(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        Ok(Target::constrain(&self.model, &x))
    }

    fn unconstrain(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&values)?;
        let p = regseiqr::posterior::ParamSet::from_flat(&self.model.layout, &values)
            .map_err(to_py)?;
        self.model.layout.unconstrain(&p).map_err(to_py)
    }

    /// Expected daily reported cases of region `region` for natural-scale
    /// parameters.
    fn expected_counts(&self, values: Vec<f64>, region: usize) -> PyResult<Vec<f64>> {
        self.check(&values)?;
        let p = regseiqr::posterior::ParamSet::from_flat(&self.model.layout, &values)
            .map_err(to_py)?;
        self.model.expected_counts(&p, region).map_err(to_py)
    }
}

impl PyPosterior {
    fn check(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.model.dim() {
            return Err(PyValueError::new_err(format!(
                "expected {} values, got {}",
                self.model.dim(),
                x.len()
            )));
        }
        Ok(())
    }
}

/// Simulate cases from the built-in 2020 truth; writes `cases.csv`,
/// `truth.csv` and the resolved config to `out` and returns the counts
/// per region.
#[pyfunction]
#[pyo3(signature = (config, out, seed=1, end=None))]
fn simulate(
    config: &PyConfig,
    out: PathBuf,
    seed: u64,
    end: Option<&str>,
) -> PyResult<BTreeMap<String, Vec<u64>>> {
    let end = end
        .map(|s| s.parse().map_err(|e| PyValueError::new_err(format!("bad date {s:?}: {e}"))))
        .transpose()?;
    let series = workbench::run_simulate(&config.inner, seed, end, &out).map_err(to_py)?;
    Ok(series.into_iter().map(|s| (s.region, s.counts)).collect())
}

/// Fit and write all outputs to `out`; returns the run summary as JSON.
#[pyfunction]
fn fit(py: Python<'_>, config: &PyConfig, data: PathBuf, out: PathBuf) -> PyResult<String> {
    let cfg = config.inner.clone();
    let summary = py
        .detach(move || {
            let series = ingest(&data, &cfg.region_names())?;
            workbench::run_fit(&cfg, &series, &out)
        })
        .map_err(to_py)?;
    serde_json::to_string(&summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Basic reproduction number for transmission rate `beta`.
#[pyfunction]
#[pyo3(signature = (beta, config=None))]
fn r0_basic(beta: f64, config: Option<&PyConfig>) -> f64 {
    let fixed = config.map(|c| c.inner.fixed).unwrap_or_default();
    reproduction::r0_basic(beta, &fixed)
}

/// Reproduction number at contact fraction `f`.
#[pyfunction]
#[pyo3(signature = (beta, f, config=None))]
fn r0_regional(beta: f64, f: f64, config: Option<&PyConfig>) -> f64 {
    let fixed = config.map(|c| c.inner.fixed).unwrap_or_default();
    reproduction::r0_regional(beta, f, &fixed)
}

/// `[a, b, c]` with R0(f) / beta = a + b f + c f^2.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn quadratic_coefficients(config: Option<&PyConfig>) -> [f64; 3] {
    let fixed = config.map(|c| c.inner.fixed).unwrap_or_default();
    reproduction::quadratic_coefficients(&fixed)
}

/// NB2 log probability of count `c` with mean `mu` and dispersion `phi`.
#[pyfunction]
fn nb2_logpmf(c: u64, mu: f64, phi: f64) -> PyResult<f64> {
    nb2_log_pmf(c, mu, phi).map_err(to_py)
}

#[pymodule]
fn regseiqr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyPosterior>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(r0_basic, m)?)?;
    m.add_function(wrap_pyfunction!(r0_regional, m)?)?;
    m.add_function(wrap_pyfunction!(quadratic_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(nb2_logpmf, m)?)?;
    Ok(())
}
