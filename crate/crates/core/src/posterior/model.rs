use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::priors::PriorSpec;
use super::transform::{ParamLayout, ParamSet};
use crate::cases::CaseSeries;
use crate::dual::{Dual, Real};
use crate::dynamics::{
    blend_value, check_state, rk4, transmission_rhs, CompartmentState, FixedParams, Grid,
    RegionConfig,
};
use crate::error::{Error, Result};
use crate::observation::{nb2_terms, DelayKernel, DelaySpec, MU_FLOOR};
use crate::sampler::Target;
use crate::schedules::{DistancingSchedule, PhaseValues, TestingSchedule};

/// Most tangent directions carried through the ODE: the transmission rate
/// and up to seven contact phases.
const TANGENTS: usize = 8;
/// Smaller tangent width used when few phases start before the last
/// observation.
const FEW_TANGENTS: usize = 4;

const TRANSMISSION_NAMES: [&str; 8] = ["S", "E1", "E2", "I", "Sd", "E1d", "E2d", "Id"];

/// Everything shared by all regions except data and parameters.
#[derive(Debug, Clone)]
pub struct ModelContext {
    pub fixed: FixedParams,
    pub distancing: DistancingSchedule,
    pub testing: TestingSchedule,
    pub kernel: DelayKernel,
    pub grid: Grid,
}

impl ModelContext {
    pub fn new(
        fixed: FixedParams,
        distancing: DistancingSchedule,
        testing: TestingSchedule,
        delay: DelaySpec,
        grid: Grid,
    ) -> Result<Self> {
        fixed.validate()?;
        Ok(Self {
            fixed,
            distancing,
            testing,
            kernel: DelayKernel::new(delay, grid)?,
            grid,
        })
    }
}

impl Default for ModelContext {
    /// Default fixed parameters, 2020 schedules, 0.1-day grid.
    fn default() -> Self {
        Self::new(
            FixedParams::default(),
            DistancingSchedule::bc_2020(),
            TestingSchedule::bc_2020(),
            DelaySpec::default(),
            Grid::default(),
        )
        .expect("built-in context is valid")
    }
}

/// Observations of one region mapped onto the model grid.
#[derive(Debug, Clone)]
pub struct RegionData {
    pub region: RegionConfig,
    pub init: CompartmentState,
    pub days: Vec<i64>,
    pub counts: Vec<u64>,
    segments: Vec<usize>,
    grid_index: Vec<usize>,
}

impl RegionData {
    pub fn new(
        region: RegionConfig,
        init: CompartmentState,
        series: &CaseSeries,
        ctx: &ModelContext,
    ) -> Result<Self> {
        let cal = ctx.distancing.calendar();
        let mut days = Vec::with_capacity(series.len());
        let mut segments = Vec::with_capacity(series.len());
        let mut grid_index = Vec::with_capacity(series.len());
        for date in series.dates() {
            if date < ctx.distancing.observation_start() {
                return Err(Error::OutOfObservationWindow {
                    date,
                    start: ctx.distancing.observation_start(),
                });
            }
            let day = cal.day(date);
            days.push(day);
            segments.push(ctx.testing.segment_index(date)?);
            grid_index.push(ctx.grid.index(day as f64)?);
        }
        Ok(Self {
            region,
            init,
            days,
            counts: series.counts.clone(),
            segments,
            grid_index,
        })
    }

    pub fn segments(&self) -> &[usize] {
        &self.segments
    }

    /// Expected counts `mu` on every observation date (floored).
    pub fn expected_counts(
        &self,
        ctx: &ModelContext,
        beta: f64,
        values: &PhaseValues,
    ) -> Result<Vec<f64>> {
        if self.days.is_empty() {
            return Ok(Vec::new());
        }
        let conv = self.delayed_flow(ctx, beta, &values.f)?;
        Ok(conv
            .iter()
            .zip(&self.segments)
            .map(|(c, s)| (values.psi[*s] * c).max(MU_FLOOR))
            .collect())
    }

    /// Symptom-onset flow `k2 (E2 + E2d)` on every grid node up to the
    /// last observation.
    fn onset_flow<T: Real>(&self, ctx: &ModelContext, beta: T, f: &[T]) -> Result<Vec<T>> {
        let grid = ctx.grid;
        let last = *self.grid_index.iter().max().expect("non-empty data");
        let n = self.region.population;
        let fixed = &ctx.fixed;
        let sched = &ctx.distancing;
        let s = &self.init;
        let init = [s.s, s.e1, s.e2, s.i, s.sd, s.e1d, s.e2d, s.id].map(T::constant);
        let beta_over_n = beta * (1.0 / n);
        let mut flow: Vec<T> = Vec::with_capacity(last + 1);
        rk4(
            init,
            grid,
            0,
            last,
            |t, y| transmission_rhs(y, blend_value(sched.blend(t), f), beta_over_n, fixed),
            |k, y| {
                check_state(y, grid.time(k), n, &TRANSMISSION_NAMES)?;
                flow.push((y[2] + y[6]) * fixed.k2);
                Ok(())
            },
        )?;
        Ok(flow)
    }

    /// `sum_j w_j k2 (E2 + E2d)(r - s_j)` for each observation date.
    fn delayed_flow(&self, ctx: &ModelContext, beta: f64, f: &[f64]) -> Result<Vec<f64>> {
        let flow = self.onset_flow(ctx, beta, f)?;
        Ok(self
            .grid_index
            .iter()
            .map(|&idx| ctx.kernel.convolve(&flow, idx))
            .collect())
    }
}

/// The joint posterior over shared and regional parameters.
#[derive(Debug, Clone)]
pub struct PosteriorModel {
    pub layout: ParamLayout,
    pub priors: PriorSpec,
    pub ctx: ModelContext,
    pub data: Vec<RegionData>,
}

impl PosteriorModel {
    pub fn new(
        priors: PriorSpec,
        ctx: ModelContext,
        data: Vec<RegionData>,
        share_r0b: bool,
    ) -> Result<Self> {
        let n_f = ctx.distancing.n_phases();
        let n_psi = ctx.testing.n_segments();
        if n_f + 1 > TANGENTS {
            return Err(Error::Config(format!(
                "at most {} contact phases are supported, got {n_f}",
                TANGENTS - 1
            )));
        }
        if priors.f.len() != n_f || priors.psi.len() != n_psi {
            return Err(Error::Config(format!(
                "priors list {} contact and {} testing entries; schedules need {n_f} and {n_psi}",
                priors.f.len(),
                priors.psi.len()
            )));
        }
        if ctx.kernel.grid != ctx.grid {
            return Err(Error::Config("delay kernel grid differs from model grid".into()));
        }
        priors.validate()?;
        ctx.fixed.validate()?;
        let layout = ParamLayout::new(
            data.iter().map(|d| d.region.name.clone()).collect(),
            n_f,
            n_psi,
            share_r0b,
        );
        Ok(Self {
            layout,
            priors,
            ctx,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Sum of prior log densities on the constrained scale; `-inf` outside
    /// the support.
    pub fn log_prior(&self, p: &ParamSet) -> f64 {
        if self.layout.check_params(p).is_err() || !p.in_support() {
            return f64::NEG_INFINITY;
        }
        let mut lp: f64 = p.r0b.iter().map(|x| self.priors.r0b.ln_pdf(*x)).sum();
        for r in &p.regions {
            lp += r
                .values
                .f
                .iter()
                .zip(&self.priors.f)
                .map(|(x, b)| b.ln_pdf(*x))
                .sum::<f64>();
            lp += r
                .values
                .psi
                .iter()
                .zip(&self.priors.psi)
                .map(|(x, b)| b.ln_pdf(*x))
                .sum::<f64>();
            lp += self.priors.phi.ln_pdf(r.phi);
        }
        lp
    }

    pub fn log_likelihood(&self, p: &ParamSet) -> Result<f64> {
        self.layout.check_params(p)?;
        let per_region: Result<Vec<f64>> = (0..self.data.len())
            .into_par_iter()
            .map(|r| self.region_log_likelihood(p, r))
            .collect();
        Ok(per_region?.iter().sum())
    }

    fn region_log_likelihood(&self, p: &ParamSet, r: usize) -> Result<f64> {
        let data = &self.data[r];
        if data.counts.is_empty() {
            return Ok(0.0);
        }
        let rp = &p.regions[r];
        let beta = p.beta_for(r, &self.ctx.fixed);
        let conv = data.delayed_flow(&self.ctx, beta, &rp.values.f)?;
        Ok(conv
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let mu = (rp.values.psi[data.segments[k]] * c).max(MU_FLOOR);
                nb2_terms(data.counts[k] as f64, mu, rp.phi).0
            })
            .sum())
    }

    /// Log posterior density on the unconstrained scale; `-inf` when the
    /// point is non-finite or the forward solve fails.
    pub fn log_posterior(&self, u: &[f64]) -> f64 {
        if u.len() != self.dim() || u.iter().any(|x| !x.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let Ok(p) = self.layout.constrain(u) else {
            return f64::NEG_INFINITY;
        };
        let lp = self.log_prior(&p);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        match self.log_likelihood(&p) {
            Ok(ll) if ll.is_finite() => {
                let v = lp + ll + self.layout.log_jacobian(u);
                if v.is_finite() {
                    v
                } else {
                    f64::NEG_INFINITY
                }
            }
            _ => f64::NEG_INFINITY,
        }
    }

    /// Exact gradient of [`Self::log_posterior`] for the discretized model.
    pub fn gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_posterior_and_gradient(u)?.1)
    }

    pub fn log_posterior_and_gradient(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        if u.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coordinates, got {}",
                self.dim(),
                u.len()
            )));
        }
        if let Some(i) = u.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("coordinate {i} ({})", self.layout.names()[i]),
            });
        }
        let layout = &self.layout;
        let p = layout.constrain(u)?;
        let mut grad = vec![0.0; layout.dim()];
        let mut value = 0.0;

        // priors and Jacobian on the unconstrained scale
        for r in 0..layout.n_regions() {
            if layout.share_r0b && r > 0 {
                continue;
            }
            let i = layout.r0b_index(r);
            let (v, g) = self.priors.r0b.ln_pdf_log_scale(u[i]);
            value += v;
            grad[i] += g;
        }
        for r in 0..layout.n_regions() {
            for (j, b) in self.priors.f.iter().enumerate() {
                let i = layout.f_index(r, j);
                let (v, g) = b.ln_pdf_logit_scale(u[i]);
                value += v;
                grad[i] += g;
            }
            for (k, b) in self.priors.psi.iter().enumerate() {
                let i = layout.psi_index(r, k);
                let (v, g) = b.ln_pdf_logit_scale(u[i]);
                value += v;
                grad[i] += g;
            }
            let i = layout.phi_index(r);
            let (v, g) = self.priors.phi.ln_pdf_log_scale(u[i]);
            value += v;
            grad[i] += g;
        }

        let per_region: Result<Vec<RegionGradient>> = (0..self.data.len())
            .into_par_iter()
            .map(|r| {
                // phases that begin after the last observation cannot affect it
                let t_last = self.data[r].grid_index.iter().max().map_or(0.0, |&k| {
                    self.ctx.grid.time(k)
                });
                let active = self.ctx.distancing.phases_started(t_last);
                if active < FEW_TANGENTS {
                    self.region_gradient::<FEW_TANGENTS>(&p, r, active)
                } else {
                    self.region_gradient::<TANGENTS>(&p, r, active)
                }
            })
            .collect();
        for (r, rg) in per_region?.into_iter().enumerate() {
            value += rg.log_lik;
            let beta = p.beta_for(r, &self.ctx.fixed);
            // d beta / d ln R0b = beta
            grad[layout.r0b_index(r)] += rg.d_beta * beta;
            let vals = &p.regions[r].values;
            for (j, g) in rg.d_f.iter().enumerate() {
                let x = vals.f[j];
                grad[layout.f_index(r, j)] += g * x * (1.0 - x);
            }
            for (k, g) in rg.d_psi.iter().enumerate() {
                let x = vals.psi[k];
                grad[layout.psi_index(r, k)] += g * x * (1.0 - x);
            }
            grad[layout.phi_index(r)] += rg.d_phi * p.regions[r].phi;
        }

        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                index: i,
                name: layout.names()[i].clone(),
            });
        }
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: "log posterior".into(),
            });
        }
        Ok((value, grad))
    }

    fn region_gradient<const N: usize>(
        &self,
        p: &ParamSet,
        r: usize,
        active: usize,
    ) -> Result<RegionGradient> {
        let data = &self.data[r];
        let rp = &p.regions[r];
        let n_f = self.layout.n_f;
        let mut out = RegionGradient {
            log_lik: 0.0,
            d_beta: 0.0,
            d_f: vec![0.0; n_f],
            d_psi: vec![0.0; self.layout.n_psi],
            d_phi: 0.0,
        };
        if data.counts.is_empty() {
            return Ok(out);
        }
        let beta = Dual::<N>::variable(p.beta_for(r, &self.ctx.fixed), 0);
        let f: Vec<Dual<N>> = rp
            .values
            .f
            .iter()
            .enumerate()
            .map(|(j, x)| {
                if j < active {
                    Dual::variable(*x, j + 1)
                } else {
                    Dual::constant(*x)
                }
            })
            .collect();
        let flow = data.onset_flow(&self.ctx, beta, &f)?;
        let values: Vec<f64> = flow.iter().map(|x| x.re).collect();
        let w = self.ctx.kernel.weights();
        // adjoint of the convolution: weight of every flow node in d loglik
        let mut adjoint = vec![0.0; flow.len()];
        for (k, &idx) in data.grid_index.iter().enumerate() {
            let seg = data.segments[k];
            let psi = rp.values.psi[seg];
            let conv = self.ctx.kernel.convolve(&values, idx);
            let raw = psi * conv;
            let floored = raw < MU_FLOOR;
            let mu = if floored { MU_FLOOR } else { raw };
            let (lp, dmu, dphi) = nb2_terms(data.counts[k] as f64, mu, rp.phi);
            out.log_lik += lp;
            out.d_phi += dphi;
            if !floored {
                out.d_psi[seg] += dmu * conv;
                let scale = dmu * psi;
                for (j, wj) in w.iter().enumerate().take(idx + 1) {
                    adjoint[idx - j] += scale * wj;
                }
            }
        }
        for (a, x) in adjoint.iter().zip(&flow) {
            if *a != 0.0 {
                out.d_beta += a * x.eps[0];
                for j in 0..active {
                    out.d_f[j] += a * x.eps[j + 1];
                }
            }
        }
        Ok(out)
    }

    /// Expected counts `mu` for every observation of region `r` (floored).
    pub fn expected_counts(&self, p: &ParamSet, r: usize) -> Result<Vec<f64>> {
        self.data[r].expected_counts(
            &self.ctx,
            p.beta_for(r, &self.ctx.fixed),
            &p.regions[r].values,
        )
    }
}

struct RegionGradient {
    log_lik: f64,
    d_beta: f64,
    d_f: Vec<f64>,
    d_psi: Vec<f64>,
    d_phi: f64,
}

impl Target for PosteriorModel {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn log_density_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.log_posterior_and_gradient(x)
    }

    /// An independent draw from the priors, on the unconstrained scale.
    fn initial_draw(&self, rng: &mut ChaCha20Rng) -> Vec<f64> {
        let p = self.priors.sample(&self.layout, rng);
        self.layout
            .unconstrain(&p)
            .expect("prior draw matches the layout")
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        self.layout
            .constrain(x)
            .expect("sampler keeps the layout dimension")
            .to_flat(&self.layout)
    }

    fn names(&self) -> Vec<String> {
        self.layout.names()
    }
}
