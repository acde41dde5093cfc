use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use super::transform::{ParamLayout, ParamSet, RegionParams};
use crate::schedules::PhaseValues;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalPrior {
    pub meanlog: f64,
    pub sdlog: f64,
}

impl LogNormalPrior {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        let z = (x.ln() - self.meanlog) / self.sdlog;
        -x.ln() - self.sdlog.ln() - LN_SQRT_2PI - 0.5 * z * z
    }

    /// Density of `u = ln x` (log density plus log-Jacobian) and its derivative.
    pub(crate) fn ln_pdf_log_scale(&self, u: f64) -> (f64, f64) {
        let z = (u - self.meanlog) / self.sdlog;
        (
            -self.sdlog.ln() - LN_SQRT_2PI - 0.5 * z * z,
            -z / self.sdlog,
        )
    }

    pub fn mode(&self) -> f64 {
        (self.meanlog - self.sdlog * self.sdlog).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl BetaPrior {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0 && x < 1.0) {
            return f64::NEG_INFINITY;
        }
        (self.a - 1.0) * x.ln() + (self.b - 1.0) * (-x).ln_1p() - ln_beta(self.a, self.b)
    }

    /// Density of `u = logit x` and its derivative with respect to `u`.
    pub(crate) fn ln_pdf_logit_scale(&self, u: f64) -> (f64, f64) {
        let ln_x = -softplus(-u);
        let ln_1mx = -softplus(u);
        let x = logistic(u);
        (
            self.a * ln_x + self.b * ln_1mx - ln_beta(self.a, self.b),
            self.a * (1.0 - x) - self.b * x,
        )
    }

    pub fn mode(&self) -> f64 {
        (self.a - 1.0) / (self.a + self.b - 2.0)
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn sd(&self) -> f64 {
        let s = self.a + self.b;
        (self.a * self.b / (s * s * (s + 1.0))).sqrt()
    }
}

/// Prior on the NB2 dispersion, stated on `1/phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DispersionPrior {
    /// `1/phi ~ chi-square(df)`.
    InverseChiSquare { df: f64 },
}

impl DispersionPrior {
    /// Log density of `phi` itself (includes the `1/phi^2` change of variables).
    pub fn ln_pdf(&self, phi: f64) -> f64 {
        if !(phi > 0.0) || !phi.is_finite() {
            return f64::NEG_INFINITY;
        }
        match *self {
            DispersionPrior::InverseChiSquare { df } => {
                let y = 1.0 / phi;
                let k = 0.5 * df;
                (k - 1.0) * y.ln() - 0.5 * y - k * std::f64::consts::LN_2 - ln_gamma(k)
                    - 2.0 * phi.ln()
            }
        }
    }

    /// Density of `u = ln phi` and its derivative.
    pub(crate) fn ln_pdf_log_scale(&self, u: f64) -> (f64, f64) {
        match *self {
            DispersionPrior::InverseChiSquare { df } => {
                let k = 0.5 * df;
                let inv = (-u).exp();
                (
                    -k * u - 0.5 * inv - k * std::f64::consts::LN_2 - ln_gamma(k),
                    -k + 0.5 * inv,
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub r0b: LogNormalPrior,
    pub f: Vec<BetaPrior>,
    pub psi: Vec<BetaPrior>,
    pub phi: DispersionPrior,
}

impl Default for PriorSpec {
    fn default() -> Self {
        let b = BetaPrior::new;
        Self {
            r0b: LogNormalPrior {
                meanlog: 2.6f64.ln(),
                sdlog: 0.2,
            },
            f: vec![
                b(1.393, 1.590),
                b(1.500, 1.500),
                b(1.590, 1.393),
                b(1.655, 1.281),
                b(1.694, 1.174),
                b(1.590, 1.393),
            ],
            psi: vec![
                b(1.217, 2.951),
                b(1.509, 3.036),
                b(1.870, 3.030),
                b(2.263, 2.894),
            ],
            phi: DispersionPrior::InverseChiSquare { df: 1.0 },
        }
    }
}

impl PriorSpec {
    /// Independent draw of every parameter in `layout`, clamped into the
    /// open support so it can be unconstrained.
    pub fn sample<R: Rng + ?Sized>(&self, layout: &ParamLayout, rng: &mut R) -> ParamSet {
        let open = |x: f64| x.clamp(1e-12, 1.0 - 1e-12);
        let r0b_dist = LogNormal::new(self.r0b.meanlog, self.r0b.sdlog).expect("validated prior");
        let n_r0b = if layout.share_r0b { 1 } else { layout.n_regions() };
        let r0b = (0..n_r0b).map(|_| r0b_dist.sample(rng)).collect();
        let beta = |b: &BetaPrior, rng: &mut R| {
            open(Beta::new(b.a, b.b).expect("validated prior").sample(rng))
        };
        let regions = (0..layout.n_regions())
            .map(|_| {
                let f = self.f.iter().map(|b| beta(b, rng)).collect();
                let psi = self.psi.iter().map(|b| beta(b, rng)).collect();
                let phi = match self.phi {
                    DispersionPrior::InverseChiSquare { df } => {
                        let y: f64 = ChiSquared::new(df).expect("validated prior").sample(rng);
                        (1.0 / y.max(1e-300)).min(1e12)
                    }
                };
                RegionParams {
                    values: PhaseValues { f, psi },
                    phi,
                }
            })
            .collect();
        ParamSet {
            r0b,
            regions,
            share_r0b: layout.share_r0b,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.r0b.sdlog > 0.0
            && self.r0b.meanlog.is_finite()
            && self
                .f
                .iter()
                .chain(&self.psi)
                .all(|p| p.a > 0.0 && p.b > 0.0)
            && match self.phi {
                DispersionPrior::InverseChiSquare { df } => df > 0.0,
            };
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("invalid priors: {self:?}")))
        }
    }
}

#[inline]
pub(crate) fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn logit(x: f64) -> f64 {
    x.ln() - (-x).ln_1p()
}

/// `ln(1 + e^x)`.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_modes_match_table() {
        let p = PriorSpec::default();
        let f_modes = [0.4, 0.5, 0.6, 0.7, 0.8, 0.6];
        let psi_modes = [0.1, 0.2, 0.3, 0.4];
        for (b, m) in p.f.iter().zip(f_modes).chain(p.psi.iter().zip(psi_modes)) {
            assert!((b.mode() - m).abs() < 0.005, "{b:?} mode {}", b.mode());
        }
        for b in &p.f {
            assert!((b.sd() - 0.25).abs() < 0.005);
        }
        for b in &p.psi {
            assert!((b.sd() - 0.2).abs() < 0.005);
        }
    }

    #[test]
    fn grid_argmax_of_first_phase_prior() {
        let b = BetaPrior::new(1.393, 1.590);
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
        for k in 1..10_000 {
            let x = k as f64 * 1e-4;
            let v = b.ln_pdf(x);
            if v > best {
                best = v;
                arg = x;
            }
        }
        assert!((arg - 0.400).abs() <= 0.001, "argmax {arg}");
    }

    #[test]
    fn beta_support_is_open() {
        let b = BetaPrior::new(1.393, 1.590);
        assert_eq!(b.ln_pdf(0.0), f64::NEG_INFINITY);
        assert_eq!(b.ln_pdf(1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn lognormal_mode_differs_from_table() {
        // the tabulated mode 2.6 is exp(meanlog); the distribution's mode is lower
        let p = PriorSpec::default();
        assert!((p.r0b.mode() - 2.6 * (-0.04f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn transformed_densities_match_change_of_variables() {
        let b = BetaPrior::new(1.7, 2.3);
        let u = 0.37;
        let x = logistic(u);
        let direct = b.ln_pdf(x) + x.ln() + (1.0 - x).ln();
        assert!((b.ln_pdf_logit_scale(u).0 - direct).abs() < 1e-12);

        let ln = LogNormalPrior {
            meanlog: 1.0,
            sdlog: 0.3,
        };
        assert!((ln.ln_pdf_log_scale(0.8).0 - (ln.ln_pdf(0.8f64.exp()) + 0.8)).abs() < 1e-12);

        let d = DispersionPrior::InverseChiSquare { df: 1.0 };
        let u = 1.9;
        assert!((d.ln_pdf_log_scale(u).0 - (d.ln_pdf(u.exp()) + u)).abs() < 1e-12);
    }

    #[test]
    fn dispersion_prior_integrates_to_one() {
        // substitute y = 1/phi; integrate the phi density on a log grid
        let d = DispersionPrior::InverseChiSquare { df: 3.0 };
        let (lo, hi, n) = (-12.0f64, 12.0f64, 200_000);
        let h = (hi - lo) / n as f64;
        let total: f64 = (0..=n)
            .map(|k| {
                let u = lo + k as f64 * h;
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                w * h * d.ln_pdf_log_scale(u).0.exp()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn logit_round_trip() {
        for &x in &[1e-6, 0.2, 0.5, 0.93, 1.0 - 1e-6] {
            let back = logistic(logit(x));
            assert!(((back - x) / x).abs() < 1e-12);
        }
    }
}
