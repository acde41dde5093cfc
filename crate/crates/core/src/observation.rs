//! Expected reported cases and the NB2 count distribution.
//!
//! Newly symptomatic individuals (`k2 * (E2 + E2d)`) are reported after a
//! Weibull-distributed delay truncated at `max_delay` days, and only a
//! fraction `psi` of them is ever tested. The delay integral is evaluated
//! with the trapezoidal rule on the trajectory grid.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::dual::Real;
use crate::dynamics::{Grid, Trajectory};
use crate::error::{Error, Result};

/// Lower bound applied to expected counts before they enter the likelihood.
pub const MU_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelaySpec {
    pub shape: f64,
    pub scale: f64,
    pub max_delay: u32,
}

impl Default for DelaySpec {
    fn default() -> Self {
        Self {
            shape: 1.73,
            scale: 9.85,
            max_delay: 45,
        }
    }
}

/// Weibull delay density with precomputed trapezoid weights on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayKernel {
    pub spec: DelaySpec,
    pub grid: Grid,
    /// `weights[j]` multiplies the integrand at delay `j * step`.
    weights: Vec<f64>,
}

impl DelayKernel {
    pub fn new(spec: DelaySpec, grid: Grid) -> Result<Self> {
        if !(spec.shape > 0.0 && spec.scale > 0.0) || spec.max_delay == 0 {
            return Err(Error::InvalidArgument(format!("invalid delay kernel {spec:?}")));
        }
        let h = grid.step();
        let m = spec.max_delay as usize * grid.steps_per_day as usize;
        let weights = (0..=m)
            .map(|j| {
                let end = j == 0 || j == m;
                let w = weibull_pdf(j as f64 * h, spec.shape, spec.scale);
                if end {
                    0.5 * h * w
                } else {
                    h * w
                }
            })
            .collect();
        Ok(Self {
            spec,
            grid,
            weights,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Trapezoid integral of the density over `[0, max_delay]`.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Trapezoid estimate of the mean delay.
    pub fn mean(&self) -> f64 {
        let h = self.grid.step();
        self.weights
            .iter()
            .enumerate()
            .map(|(j, w)| j as f64 * h * w)
            .sum()
    }

    /// Delay-weighted sum `sum_j w_j x[idx - j]`, treating indices before
    /// the start of `x` as zero.
    #[inline]
    pub(crate) fn convolve<T: Real>(&self, x: &[T], idx: usize) -> T {
        let m = self.weights.len() - 1;
        let jmax = m.min(idx);
        let mut acc = T::constant(0.0);
        for j in 0..=jmax {
            acc += x[idx - j] * self.weights[j];
        }
        acc
    }
}

fn weibull_pdf(s: f64, k: f64, lambda: f64) -> f64 {
    if s == 0.0 {
        return if k < 1.0 {
            f64::INFINITY
        } else if k == 1.0 {
            1.0 / lambda
        } else {
            0.0
        };
    }
    let z = s / lambda;
    (k / lambda) * z.powf(k - 1.0) * (-z.powf(k)).exp()
}

/// Truncated delay density `w(s)` (zero beyond the maximum delay).
pub fn delay_density(s: f64, kernel: &DelayKernel) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument(format!("delay must be non-negative, got {s}")));
    }
    if s > kernel.spec.max_delay as f64 {
        return Ok(0.0);
    }
    Ok(weibull_pdf(s, kernel.spec.shape, kernel.spec.scale))
}

/// Expected reported count on model day `day`.
pub fn expected_cases(
    traj: &Trajectory,
    day: i64,
    psi: f64,
    kernel: &DelayKernel,
    k2: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&psi) {
        return Err(Error::InvalidArgument(format!("psi = {psi} outside [0, 1]")));
    }
    if traj.grid != kernel.grid {
        return Err(Error::InvalidArgument(
            "trajectory and kernel use different grids".into(),
        ));
    }
    let idx = traj.grid.index(day as f64)?;
    let last = traj.first + traj.states.len() - 1;
    if idx > last {
        return Err(Error::TrajectoryTooShort {
            requested: day as f64,
            available: traj.t_end(),
        });
    }
    let needed = idx.saturating_sub(kernel.weights.len() - 1);
    if needed < traj.first {
        return Err(Error::InvalidArgument(format!(
            "trajectory starts at {} but the delay window reaches back to {}",
            traj.t0(),
            traj.grid.time(needed)
        )));
    }
    // index 0 of `flow` is grid node `needed`
    let flow: Vec<f64> = traj.states[needed - traj.first..=idx - traj.first]
        .iter()
        .map(|s| k2 * (s.e2 + s.e2d))
        .collect();
    Ok(psi * kernel.convolve(&flow, idx - needed))
}

/// Log of the NB2 probability mass with mean `mu` and dispersion `phi`.
pub fn nb2_log_pmf(c: u64, mu: f64, phi: f64) -> Result<f64> {
    if !(mu > 0.0) || !(phi > 0.0) || !mu.is_finite() || !phi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "NB2 needs mu > 0 and phi > 0, got mu = {mu}, phi = {phi}"
        )));
    }
    Ok(nb2_terms(c as f64, mu, phi).0)
}

/// `(log pmf, d/dmu, d/dphi)` without argument checks.
#[inline]
pub(crate) fn nb2_terms(c: f64, mu: f64, phi: f64) -> (f64, f64, f64) {
    let log_ratio = (mu / phi).ln_1p(); // ln((mu + phi) / phi)
    let coef = if c == 0.0 {
        0.0
    } else {
        ln_gamma(c + phi) - ln_gamma(c + 1.0) - ln_gamma(phi)
    };
    let lp = coef + c * (mu.ln() - phi.ln() - log_ratio) - phi * log_ratio;
    let dmu = c / mu - (c + phi) / (mu + phi);
    let dpsi = if c == 0.0 {
        0.0
    } else {
        digamma_diff(c, phi)
    };
    let dphi = dpsi - log_ratio + (mu - c) / (mu + phi);
    (lp, dmu, dphi)
}

/// `digamma(phi + c) - digamma(phi)` for a non-negative integer `c`.
fn digamma_diff(c: f64, phi: f64) -> f64 {
    if c <= 64.0 {
        (0..c as u64).map(|k| 1.0 / (phi + k as f64)).sum()
    } else {
        digamma(phi + c) - digamma(phi)
    }
}

/// Draw from NB2 as a gamma–Poisson mixture.
pub fn sample_nb2<R: Rng + ?Sized>(rng: &mut R, mu: f64, phi: f64) -> Result<u64> {
    if !(mu > 0.0) || !(phi > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "NB2 needs mu > 0 and phi > 0, got mu = {mu}, phi = {phi}"
        )));
    }
    let gamma = Gamma::new(phi, mu / phi)
        .map_err(|e| Error::InvalidArgument(format!("gamma({phi}, {}): {e}", mu / phi)))?;
    let rate: f64 = gamma.sample(rng);
    if rate <= 0.0 {
        return Ok(0);
    }
    let pois = Poisson::new(rate)
        .map_err(|e| Error::InvalidArgument(format!("poisson({rate}): {e}")))?;
    Ok(pois.sample(rng) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{CompartmentState, RegionConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn kernel() -> DelayKernel {
        DelayKernel::new(DelaySpec::default(), Grid::default()).unwrap()
    }

    fn flat_trajectory(e2: f64, e2d: f64, days: usize) -> Trajectory {
        let grid = Grid::default();
        let n = days * grid.steps_per_day as usize + 1;
        Trajectory {
            grid,
            first: 0,
            states: vec![
                CompartmentState {
                    e2,
                    e2d,
                    ..Default::default()
                };
                n
            ],
            region: RegionConfig::new("r", 1.0, 1.0),
        }
    }

    #[test]
    fn density_is_zero_at_origin_and_beyond_cutoff() {
        let k = kernel();
        assert_eq!(delay_density(0.0, &k).unwrap(), 0.0);
        assert_eq!(delay_density(46.0, &k).unwrap(), 0.0);
        assert!(delay_density(5.0, &k).unwrap() > 0.0);
        assert!(delay_density(-1.0, &k).is_err());
    }

    #[test]
    fn kernel_moments() {
        let k = kernel();
        assert!((k.mean() - 8.8).abs() < 0.1, "mean {}", k.mean());
        // the density grows like s^0.73 near zero, so the trapezoid rule
        // loses about 1e-4 of the mass on a 0.1-day grid
        assert!((k.mass() - 1.0).abs() < 5e-4, "mass {}", k.mass());
    }

    #[test]
    fn zero_flow_gives_zero_cases() {
        let t = flat_trajectory(0.0, 0.0, 100);
        assert_eq!(expected_cases(&t, 80, 0.5, &kernel(), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn constant_flow_recovers_rate() {
        let t = flat_trajectory(30.0, 10.0, 100);
        let mu = expected_cases(&t, 80, 1.0, &kernel(), 1.0).unwrap();
        assert!((mu / 40.0 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn linear_in_flow_and_psi() {
        let k = kernel();
        let a = expected_cases(&flat_trajectory(3.0, 1.0, 100), 60, 0.3, &k, 1.0).unwrap();
        let b = expected_cases(&flat_trajectory(6.0, 2.0, 100), 60, 0.3, &k, 1.0).unwrap();
        let c = expected_cases(&flat_trajectory(3.0, 1.0, 100), 60, 0.6, &k, 1.0).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12 * b);
        assert!((c - 2.0 * a).abs() < 1e-12 * c);
    }

    #[test]
    fn early_days_truncate_at_model_start() {
        let k = kernel();
        let t = flat_trajectory(1.0, 0.0, 100);
        let early = expected_cases(&t, 5, 1.0, &k, 1.0).unwrap();
        let late = expected_cases(&t, 80, 1.0, &k, 1.0).unwrap();
        assert!(early < late);
        assert!(expected_cases(&t, 101, 1.0, &k, 1.0).is_err());
    }

    #[test]
    fn nb2_zero_count_closed_form() {
        let (mu, phi) = (3.5, 2.25);
        let lp = nb2_log_pmf(0, mu, phi).unwrap();
        assert!((lp - phi * (phi.ln() - (mu + phi).ln())).abs() < 1e-13);
    }

    #[test]
    fn nb2_rejects_bad_parameters() {
        assert!(nb2_log_pmf(1, 0.0, 1.0).is_err());
        assert!(nb2_log_pmf(1, 1.0, -1.0).is_err());
    }

    #[test]
    fn nb2_gradients_match_finite_differences() {
        for &(c, mu, phi) in &[(0.0, 2.0, 3.0), (7.0, 4.5, 1.3), (250.0, 180.0, 8.0)] {
            let (_, dmu, dphi) = nb2_terms(c, mu, phi);
            let h = 1e-6;
            let fd_mu = (nb2_terms(c, mu + h, phi).0 - nb2_terms(c, mu - h, phi).0) / (2.0 * h);
            let fd_phi = (nb2_terms(c, mu, phi + h).0 - nb2_terms(c, mu, phi - h).0) / (2.0 * h);
            assert!((dmu - fd_mu).abs() < 1e-6, "{dmu} {fd_mu}");
            assert!((dphi - fd_phi).abs() < 1e-6, "{dphi} {fd_phi}");
        }
    }

    #[test]
    fn nb2_sampler_mean_and_variance() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let (mu, phi) = (12.0, 3.0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_nb2(&mut rng, mu, phi).unwrap() as f64)
            .collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((m - mu).abs() < 0.1);
        assert!((v / (mu + mu * mu / phi) - 1.0).abs() < 0.03);
    }
}
