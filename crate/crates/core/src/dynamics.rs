//! Regional SEIQR dynamics with a physically distancing copy of every
//! compartment, integrated with fixed-step classical RK4.

use serde::{Deserialize, Serialize};

use crate::dual::Real;
use crate::error::{Error, Result};
use crate::schedules::{Blend, DistancingSchedule, Level, PhaseValues};

pub const N_COMPARTMENTS: usize = 12;

pub const COMPARTMENT_NAMES: [&str; N_COMPARTMENTS] = [
    "S", "E1", "E2", "I", "Q", "R", "Sd", "E1d", "E2d", "Id", "Qd", "Rd",
];

/// Occupancy of the twelve compartments of one region (persons).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CompartmentState {
    pub s: f64,
    pub e1: f64,
    pub e2: f64,
    pub i: f64,
    pub q: f64,
    pub r: f64,
    pub sd: f64,
    pub e1d: f64,
    pub e2d: f64,
    pub id: f64,
    pub qd: f64,
    pub rd: f64,
}

impl CompartmentState {
    pub fn to_array(&self) -> [f64; N_COMPARTMENTS] {
        [
            self.s, self.e1, self.e2, self.i, self.q, self.r, self.sd, self.e1d, self.e2d,
            self.id, self.qd, self.rd,
        ]
    }

    pub fn from_array(a: [f64; N_COMPARTMENTS]) -> Self {
        let [s, e1, e2, i, q, r, sd, e1d, e2d, id, qd, rd] = a;
        Self {
            s,
            e1,
            e2,
            i,
            q,
            r,
            sd,
            e1d,
            e2d,
            id,
            qd,
            rd,
        }
    }

    pub fn total(&self) -> f64 {
        self.to_array().iter().sum()
    }

    pub fn distanced(&self) -> f64 {
        self.sd + self.e1d + self.e2d + self.id + self.qd + self.rd
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_array(self.to_array().map(|x| x * factor))
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// Epidemiological rates held fixed during inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedParams {
    /// E1 -> E2 rate (1/days).
    pub k1: f64,
    /// E2 -> I rate (1/days).
    pub k2: f64,
    /// Mean infectious duration (days).
    pub d: f64,
    /// Quarantine rate (1/days).
    pub q: f64,
    /// Return from distancing (1/days).
    pub ur: f64,
    /// Uptake of distancing (1/days).
    pub ud: f64,
}

impl Default for FixedParams {
    fn default() -> Self {
        Self {
            k1: 0.2,
            k2: 1.0,
            d: 5.0,
            q: 0.05,
            ur: 0.1,
            ud: 0.02,
        }
    }
}

impl FixedParams {
    /// Asymptotic fraction of the population practising distancing.
    pub fn distancing_fraction(&self) -> f64 {
        self.ud / (self.ur + self.ud)
    }

    /// `D + 1/k2`, the factor converting the transmission rate to R0b.
    pub fn generation_scale(&self) -> f64 {
        self.d + 1.0 / self.k2
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.k1, self.k2, self.d, self.q, self.ur, self.ud];
        if all.iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "fixed parameters must be positive: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    pub name: String,
    pub population: f64,
    pub population_ratio: f64,
}

impl RegionConfig {
    pub fn new(name: impl Into<String>, population: f64, provincial_population: f64) -> Self {
        Self {
            name: name.into(),
            population,
            population_ratio: population / provincial_population,
        }
    }
}

/// Population used to seed the provincial epidemic.
pub const BC_POPULATION: f64 = 5_100_000.0;

/// The five British Columbia health authorities.
pub fn bc_regions() -> Vec<RegionConfig> {
    [
        ("coastal", 1_225_195.0),
        ("fraser", 1_889_225.0),
        ("interior", 795_116.0),
        ("island", 843_375.0),
        ("northern", 297_570.0),
    ]
    .into_iter()
    .map(|(name, n)| RegionConfig::new(name, n, BC_POPULATION))
    .collect()
}

/// How the provincial population is seeded on the model start date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialCondition {
    /// Persons initially infected, shared over E1, E2, I and their copies.
    pub seeded: f64,
    /// Share of every compartment placed in the distancing copy. `None`
    /// uses the asymptotic distancing fraction of the fixed parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distanced_fraction: Option<f64>,
    /// E1 : E2 : I split of the seeded persons.
    pub split: [f64; 3],
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self {
            seeded: 8.0,
            distanced_fraction: None,
            split: [0.4, 0.1, 0.5],
        }
    }
}

impl InitialCondition {
    pub fn provincial_state(&self, population: f64, fixed: &FixedParams) -> Result<CompartmentState> {
        let e = self
            .distanced_fraction
            .unwrap_or_else(|| fixed.distancing_fraction());
        let total: f64 = self.split.iter().sum();
        if !(0.0..=1.0).contains(&e) || total <= 0.0 || self.seeded < 0.0 || self.seeded > population {
            return Err(Error::InvalidArgument(format!(
                "invalid initial condition {self:?}"
            )));
        }
        let [a, b, c] = self.split.map(|x| x / total * self.seeded);
        let free = population - self.seeded;
        Ok(CompartmentState {
            s: free * (1.0 - e),
            e1: a * (1.0 - e),
            e2: b * (1.0 - e),
            i: c * (1.0 - e),
            sd: free * e,
            e1d: a * e,
            e2d: b * e,
            id: c * e,
            ..Default::default()
        })
    }
}

/// Scale the provincial state by the region's share of the population.
pub fn initialize_region(provincial: &CompartmentState, region: &RegionConfig) -> CompartmentState {
    provincial.scaled(region.population_ratio)
}

/// All active infections: exposed, infectious and quarantined, both branches.
pub fn prevalence(state: &CompartmentState) -> f64 {
    state.e1 + state.e2 + state.i + state.q + state.e1d + state.e2d + state.id + state.qd
}

/// `f(t)` from plateau values of any scalar type.
#[inline]
pub(crate) fn blend_value<T: Real>(blend: Blend, f: &[T]) -> T {
    let level = |l: Level| match l {
        Level::Baseline => T::constant(1.0),
        Level::Phase(j) => f[j],
    };
    if blend.from == blend.to {
        level(blend.to)
    } else {
        level(blend.from) * (1.0 - blend.weight) + level(blend.to) * blend.weight
    }
}

/// Right-hand side of the closed transmission subsystem
/// `[S, E1, E2, I, Sd, E1d, E2d, Id]`. Quarantined and recovered
/// compartments never feed back into it.
#[inline]
pub(crate) fn transmission_rhs<T: Real>(y: &[T; 8], f: T, beta_over_n: T, p: &FixedParams) -> [T; 8] {
    let [s, e1, e2, i, sd, e1d, e2d, id] = *y;
    let gamma = p.q + 1.0 / p.d;
    let force = (i + e2 + f * (id + e2d)) * beta_over_n;
    let inf = force * s;
    let inf_d = f * force * sd;
    [
        -inf - s * p.ud + sd * p.ur,
        inf - e1 * (p.k1 + p.ud) + e1d * p.ur,
        e1 * p.k1 - e2 * (p.k2 + p.ud) + e2d * p.ur,
        e2 * p.k2 - i * (gamma + p.ud) + id * p.ur,
        -inf_d + s * p.ud - sd * p.ur,
        inf_d - e1d * (p.k1 + p.ur) + e1 * p.ud,
        e1d * p.k1 - e2d * (p.k2 + p.ur) + e2 * p.ud,
        e2d * p.k2 - id * (gamma + p.ur) + i * p.ud,
    ]
}

#[inline]
pub(crate) fn full_rhs<T: Real>(y: &[T; 12], f: T, beta_over_n: T, p: &FixedParams) -> [T; 12] {
    let core = [y[0], y[1], y[2], y[3], y[6], y[7], y[8], y[9]];
    let c = transmission_rhs(&core, f, beta_over_n, p);
    let (i, q, r, id, qd, rd) = (y[3], y[4], y[5], y[9], y[10], y[11]);
    let inv_d = 1.0 / p.d;
    [
        c[0],
        c[1],
        c[2],
        c[3],
        i * p.q - q * (inv_d + p.ud) + qd * p.ur,
        (i + q) * inv_d - r * p.ud + rd * p.ur,
        c[4],
        c[5],
        c[6],
        c[7],
        id * p.q - qd * (inv_d + p.ur) + q * p.ud,
        (id + qd) * inv_d + r * p.ud - rd * p.ur,
    ]
}

/// Time derivative of the full state at time `t`.
pub fn derivatives(
    state: &CompartmentState,
    t: f64,
    beta: f64,
    values: &PhaseValues,
    sched: &DistancingSchedule,
    fixed: &FixedParams,
    population: f64,
) -> Result<CompartmentState> {
    if !state.is_finite() || !t.is_finite() || !beta.is_finite() {
        return Err(Error::NonFinite {
            context: "ODE right-hand side input".into(),
        });
    }
    if population <= 0.0 {
        return Err(Error::InvalidArgument("population must be positive".into()));
    }
    let f = blend_value(sched.blend(t), &values.f);
    Ok(CompartmentState::from_array(full_rhs(
        &state.to_array(),
        f,
        beta / population,
        fixed,
    )))
}

/// Uniform time grid with an integer number of steps per day, so every
/// whole-day change point is a grid node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub steps_per_day: u32,
}

impl Grid {
    pub fn from_step(step: f64) -> Result<Self> {
        if !(step > 0.0) || step > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "step must be in (0, 1] days, got {step}"
            )));
        }
        let n = (1.0 / step).round();
        if ((1.0 / step) - n).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "step {step} does not divide one day; change points would fall off the grid"
            )));
        }
        Ok(Self {
            steps_per_day: n as u32,
        })
    }

    pub fn step(&self) -> f64 {
        1.0 / self.steps_per_day as f64
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 / self.steps_per_day as f64
    }

    /// Grid index of model time `t`, which must lie on the grid.
    pub fn index(&self, t: f64) -> Result<usize> {
        let x = t * self.steps_per_day as f64;
        let k = x.round();
        if (x - k).abs() > 1e-6 || k < 0.0 {
            return Err(Error::InvalidArgument(format!("t = {t} is not a grid node")));
        }
        Ok(k as usize)
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self { steps_per_day: 10 }
    }
}

/// RK4 over grid nodes `first..=last`; `visit` sees every node including
/// the first. `contact` gives `f` at a time; `check` validates each new
/// state.
pub(crate) fn rk4<T: Real, const M: usize>(
    mut y: [T; M],
    grid: Grid,
    first: usize,
    last: usize,
    rhs: impl Fn(f64, &[T; M]) -> [T; M],
    mut visit: impl FnMut(usize, &[T; M]) -> Result<()>,
) -> Result<[T; M]> {
    let h = grid.step();
    visit(first, &y)?;
    for k in first..last {
        let t = grid.time(k);
        let k1 = rhs(t, &y);
        let mut tmp = y;
        for j in 0..M {
            tmp[j] = y[j] + k1[j] * (0.5 * h);
        }
        let k2 = rhs(t + 0.5 * h, &tmp);
        for j in 0..M {
            tmp[j] = y[j] + k2[j] * (0.5 * h);
        }
        let k3 = rhs(t + 0.5 * h, &tmp);
        for j in 0..M {
            tmp[j] = y[j] + k3[j] * h;
        }
        let k4 = rhs(t + h, &tmp);
        for j in 0..M {
            y[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0);
        }
        visit(k + 1, &y)?;
    }
    Ok(y)
}

/// Tolerated undershoot below zero, relative to the population.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-9;

pub(crate) fn check_state<T: Real, const M: usize>(
    y: &[T; M],
    t: f64,
    population: f64,
    names: &[&'static str; M],
) -> Result<()> {
    for (x, name) in y.iter().zip(names) {
        let v = x.value();
        if !x.is_finite() {
            return Err(Error::NonFinite {
                context: format!("compartment {name} at t = {t}"),
            });
        }
        if v < -NEGATIVITY_TOLERANCE * population {
            return Err(Error::IntegrationInstability {
                t,
                compartment: name,
                value: v,
            });
        }
    }
    Ok(())
}

/// Dense RK4 solution on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    /// Grid index of the first state.
    pub first: usize,
    pub states: Vec<CompartmentState>,
    pub region: RegionConfig,
}

impl Trajectory {
    pub fn t0(&self) -> f64 {
        self.grid.time(self.first)
    }

    pub fn t_end(&self) -> f64 {
        self.grid.time(self.first + self.states.len() - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.states.len()).map(|k| self.grid.time(self.first + k))
    }

    /// State at grid time `t`.
    pub fn at(&self, t: f64) -> Result<&CompartmentState> {
        let k = self.grid.index(t)?;
        if k < self.first || k >= self.first + self.states.len() {
            return Err(Error::TrajectoryTooShort {
                requested: t,
                available: self.t_end(),
            });
        }
        Ok(&self.states[k - self.first])
    }

    /// State at a whole day.
    pub fn at_day(&self, day: i64) -> Result<&CompartmentState> {
        self.at(day as f64)
    }
}

/// Everything that determines one regional forward solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveSpec<'a> {
    pub beta: f64,
    pub values: &'a PhaseValues,
    pub sched: &'a DistancingSchedule,
    pub fixed: &'a FixedParams,
    pub grid: Grid,
}

/// Integrate the full system from `t0` to `t1` (both grid nodes).
pub fn integrate(
    init: &CompartmentState,
    t0: f64,
    t1: f64,
    spec: SolveSpec<'_>,
    region: &RegionConfig,
) -> Result<Trajectory> {
    if !(t0 < t1) {
        return Err(Error::InvalidArgument(format!("need t0 < t1, got {t0} >= {t1}")));
    }
    if !init.is_finite() {
        return Err(Error::NonFinite {
            context: "initial state".into(),
        });
    }
    let n = region.population;
    if n <= 0.0 {
        return Err(Error::InvalidArgument("population must be positive".into()));
    }
    let (first, last) = (spec.grid.index(t0)?, spec.grid.index(t1)?);
    let beta_over_n = spec.beta / n;
    let f = &spec.values.f;
    let mut states = Vec::with_capacity(last - first + 1);
    rk4(
        init.to_array(),
        spec.grid,
        first,
        last,
        |t, y| full_rhs(y, blend_value(spec.sched.blend(t), f), beta_over_n, spec.fixed),
        |k, y| {
            check_state(y, spec.grid.time(k), n, &COMPARTMENT_NAMES)?;
            states.push(CompartmentState::from_array(y.map(|x| x.max(0.0))));
            Ok(())
        },
    )?;
    Ok(Trajectory {
        grid: spec.grid,
        first,
        states,
        region: region.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::ymd;

    fn flat_values() -> PhaseValues {
        PhaseValues::new(vec![0.4, 0.5, 0.6, 0.7, 0.8, 0.6], vec![0.1, 0.2, 0.3, 0.4]).unwrap()
    }

    fn region(n: f64) -> RegionConfig {
        RegionConfig::new("test", n, n)
    }

    #[test]
    fn all_susceptible_only_switches() {
        let n = 1000.0;
        let s = CompartmentState {
            s: n,
            ..Default::default()
        };
        let d = derivatives(
            &s,
            10.0,
            0.7,
            &flat_values(),
            &DistancingSchedule::bc_2020(),
            &FixedParams::default(),
            n,
        )
        .unwrap();
        assert!((d.s + 0.02 * n).abs() < 1e-12);
        assert!((d.sd - 0.02 * n).abs() < 1e-12);
        let a = d.to_array();
        for (k, v) in a.iter().enumerate() {
            if k != 0 && k != 6 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn zero_state_has_zero_derivative() {
        let d = derivatives(
            &CompartmentState::default(),
            50.0,
            0.5,
            &flat_values(),
            &DistancingSchedule::bc_2020(),
            &FixedParams::default(),
            10.0,
        )
        .unwrap();
        assert!(d.to_array().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let s = CompartmentState {
            s: f64::NAN,
            ..Default::default()
        };
        let r = derivatives(
            &s,
            0.0,
            0.5,
            &flat_values(),
            &DistancingSchedule::bc_2020(),
            &FixedParams::default(),
            10.0,
        );
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn derivative_sums_to_zero() {
        let s = CompartmentState::from_array([
            500.0, 10.0, 5.0, 7.0, 3.0, 40.0, 300.0, 4.0, 2.0, 3.0, 1.0, 20.0,
        ]);
        let d = derivatives(
            &s,
            45.3,
            0.6,
            &flat_values(),
            &DistancingSchedule::bc_2020(),
            &FixedParams::default(),
            s.total(),
        )
        .unwrap();
        assert!(d.total().abs() < 1e-10);
    }

    #[test]
    fn initialization_scales_every_compartment() {
        let fixed = FixedParams::default();
        let prov = InitialCondition::default()
            .provincial_state(5_100_000.0, &fixed)
            .unwrap();
        assert!((prov.total() - 5_100_000.0).abs() < 1e-6);
        let seeded = prov.e1 + prov.e2 + prov.i + prov.e1d + prov.e2d + prov.id;
        assert!((seeded - 8.0).abs() < 1e-12);
        let coastal = RegionConfig {
            name: "coastal".into(),
            population: 1_224_000.0,
            population_ratio: 0.24,
        };
        let c = initialize_region(&prov, &coastal);
        assert_eq!(c.s, 0.24 * prov.s);
        assert_eq!(c.e2d, 0.24 * prov.e2d);
        let unit = RegionConfig {
            population_ratio: 1.0,
            ..coastal.clone()
        };
        assert_eq!(initialize_region(&prov, &unit), prov);
        assert_eq!(
            initialize_region(&CompartmentState::default(), &coastal),
            CompartmentState::default()
        );
    }

    #[test]
    fn prevalence_counts_active_infections() {
        assert_eq!(prevalence(&CompartmentState::default()), 0.0);
        let recovered = CompartmentState {
            r: 100.0,
            rd: 50.0,
            ..Default::default()
        };
        assert_eq!(prevalence(&recovered), 0.0);
        let s = CompartmentState::from_array([
            0.0, 1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 5.0, 6.0, 7.0, 8.0, 0.0,
        ]);
        assert_eq!(prevalence(&s), 36.0);
    }

    #[test]
    fn grid_rejects_misaligned_steps() {
        assert!(Grid::from_step(0.3).is_err());
        assert_eq!(Grid::from_step(0.1).unwrap().steps_per_day, 10);
        assert_eq!(Grid::from_step(0.25).unwrap().steps_per_day, 4);
    }

    #[test]
    fn distancing_equilibrium_without_transmission() {
        let n = 1e6;
        let init = CompartmentState {
            s: n,
            ..Default::default()
        };
        let fixed = FixedParams::default();
        let values = flat_values();
        let sched = DistancingSchedule::bc_2020();
        let spec = SolveSpec {
            beta: 0.0,
            values: &values,
            sched: &sched,
            fixed: &fixed,
            grid: Grid::default(),
        };
        let traj = integrate(&init, 0.0, 100.0, spec, &region(n)).unwrap();
        let end = traj.at(100.0).unwrap();
        // closed form: e N (1 - exp(-(ur + ud) t))
        let rate = fixed.ur + fixed.ud;
        let exact = fixed.distancing_fraction() * (1.0 - (-rate * 100.0f64).exp());
        assert!((end.sd / n - exact).abs() < 1e-9);
        assert!((end.sd / n - 1.0 / 6.0).abs() < 1e-4);
        assert_eq!(ymd(2020, 2, 1), sched.model_start());
    }
}
