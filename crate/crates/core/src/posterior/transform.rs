//! Flat unconstrained parameter vectors and their constrained counterparts.
//!
//! Layout, hierarchical (shared R0b):
//! `[ln R0b, region 0: logit f.., logit psi.., ln phi, region 1: ...]`.
//! Per-region R0b moves `ln R0b` to the head of every region block, so a
//! single-region layout is identical in both modes.

use serde::{Deserialize, Serialize};

use super::priors::{logistic, logit, softplus};
use crate::dynamics::FixedParams;
use crate::error::{Error, Result};
use crate::schedules::PhaseValues;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub regions: Vec<String>,
    pub n_f: usize,
    pub n_psi: usize,
    pub share_r0b: bool,
}

/// Position of one coordinate within the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    R0b { region: Option<usize> },
    F { region: usize, phase: usize },
    Psi { region: usize, segment: usize },
    Phi { region: usize },
}

impl ParamLayout {
    pub fn new(regions: Vec<String>, n_f: usize, n_psi: usize, share_r0b: bool) -> Self {
        Self {
            regions,
            n_f,
            n_psi,
            share_r0b,
        }
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    fn region_block(&self) -> usize {
        self.n_f + self.n_psi + 1 + usize::from(!self.share_r0b)
    }

    pub fn dim(&self) -> usize {
        usize::from(self.share_r0b) + self.n_regions() * self.region_block()
    }

    fn block_start(&self, region: usize) -> usize {
        usize::from(self.share_r0b) + region * self.region_block()
    }

    pub fn r0b_index(&self, region: usize) -> usize {
        if self.share_r0b {
            0
        } else {
            self.block_start(region)
        }
    }

    pub fn f_index(&self, region: usize, phase: usize) -> usize {
        self.block_start(region) + usize::from(!self.share_r0b) + phase
    }

    pub fn psi_index(&self, region: usize, segment: usize) -> usize {
        self.f_index(region, self.n_f) + segment
    }

    pub fn phi_index(&self, region: usize) -> usize {
        self.psi_index(region, self.n_psi)
    }

    pub fn coords(&self) -> Vec<Coord> {
        let mut out = Vec::with_capacity(self.dim());
        if self.share_r0b {
            out.push(Coord::R0b { region: None });
        }
        for region in 0..self.n_regions() {
            if !self.share_r0b {
                out.push(Coord::R0b {
                    region: Some(region),
                });
            }
            out.extend((0..self.n_f).map(|phase| Coord::F { region, phase }));
            out.extend((0..self.n_psi).map(|segment| Coord::Psi { region, segment }));
            out.push(Coord::Phi { region });
        }
        out
    }

    /// Column names such as `r0b`, `fraser.f3`, `island.psi2`, `coastal.phi`.
    pub fn names(&self) -> Vec<String> {
        self.coords()
            .into_iter()
            .map(|c| match c {
                Coord::R0b { region: None } => "r0b".to_string(),
                Coord::R0b { region: Some(r) } => format!("{}.r0b", self.regions[r]),
                Coord::F { region, phase } => format!("{}.f{}", self.regions[region], phase + 2),
                Coord::Psi { region, segment } => {
                    format!("{}.psi{}", self.regions[region], segment + 1)
                }
                Coord::Phi { region } => format!("{}.phi", self.regions[region]),
            })
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names().iter().position(|n| n == name)
    }

    pub fn constrain(&self, u: &[f64]) -> Result<ParamSet> {
        self.check_dim(u.len())?;
        let r0b = if self.share_r0b {
            vec![u[0].exp()]
        } else {
            (0..self.n_regions())
                .map(|r| u[self.r0b_index(r)].exp())
                .collect()
        };
        let regions = (0..self.n_regions())
            .map(|r| RegionParams {
                values: PhaseValues {
                    f: (0..self.n_f)
                        .map(|j| logistic(u[self.f_index(r, j)]))
                        .collect(),
                    psi: (0..self.n_psi)
                        .map(|k| logistic(u[self.psi_index(r, k)]))
                        .collect(),
                },
                phi: u[self.phi_index(r)].exp(),
            })
            .collect();
        Ok(ParamSet {
            r0b,
            regions,
            share_r0b: self.share_r0b,
        })
    }

    pub fn unconstrain(&self, p: &ParamSet) -> Result<Vec<f64>> {
        self.check_params(p)?;
        let mut u = vec![0.0; self.dim()];
        for r in 0..self.n_regions() {
            u[self.r0b_index(r)] = p.r0b_for(r).ln();
            let rp = &p.regions[r];
            for (j, f) in rp.values.f.iter().enumerate() {
                u[self.f_index(r, j)] = logit(*f);
            }
            for (k, psi) in rp.values.psi.iter().enumerate() {
                u[self.psi_index(r, k)] = logit(*psi);
            }
            u[self.phi_index(r)] = rp.phi.ln();
        }
        Ok(u)
    }

    /// `ln |d constrain / d u|`.
    pub fn log_jacobian(&self, u: &[f64]) -> f64 {
        self.coords()
            .iter()
            .zip(u)
            .map(|(c, &x)| match c {
                Coord::R0b { .. } | Coord::Phi { .. } => x,
                Coord::F { .. } | Coord::Psi { .. } => -softplus(-x) - softplus(x),
            })
            .sum()
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "expected {} unconstrained coordinates, got {n}",
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn check_params(&self, p: &ParamSet) -> Result<()> {
        let expected_r0b = if self.share_r0b { 1 } else { self.n_regions() };
        let shapes_ok = p.share_r0b == self.share_r0b
            && p.r0b.len() == expected_r0b
            && p.regions.len() == self.n_regions()
            && p
                .regions
                .iter()
                .all(|r| r.values.f.len() == self.n_f && r.values.psi.len() == self.n_psi);
        if !shapes_ok {
            return Err(Error::InvalidArgument(
                "parameter set does not match the layout".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub values: PhaseValues,
    pub phi: f64,
}

/// Constrained parameters of one model evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    /// One shared value, or one per region.
    pub r0b: Vec<f64>,
    pub regions: Vec<RegionParams>,
    pub share_r0b: bool,
}

impl ParamSet {
    pub fn r0b_for(&self, region: usize) -> f64 {
        if self.share_r0b {
            self.r0b[0]
        } else {
            self.r0b[region]
        }
    }

    /// Transmission rate `R0b / (D + 1/k2)`.
    pub fn beta_for(&self, region: usize, fixed: &FixedParams) -> f64 {
        self.r0b_for(region) / fixed.generation_scale()
    }

    /// True when every value lies in its open support.
    pub fn in_support(&self) -> bool {
        self.r0b.iter().all(|x| *x > 0.0 && x.is_finite())
            && self.regions.iter().all(|r| {
                r.phi > 0.0
                    && r.phi.is_finite()
                    && r.values
                        .f
                        .iter()
                        .chain(&r.values.psi)
                        .all(|x| *x > 0.0 && *x < 1.0)
            })
    }

    /// Flat constrained values in layout order.
    pub fn to_flat(&self, layout: &ParamLayout) -> Vec<f64> {
        layout
            .coords()
            .into_iter()
            .map(|c| match c {
                Coord::R0b { region } => self.r0b_for(region.unwrap_or(0)),
                Coord::F { region, phase } => self.regions[region].values.f[phase],
                Coord::Psi { region, segment } => self.regions[region].values.psi[segment],
                Coord::Phi { region } => self.regions[region].phi,
            })
            .collect()
    }

    pub fn from_flat(layout: &ParamLayout, x: &[f64]) -> Result<Self> {
        layout.check_dim(x.len())?;
        let mut p = layout.constrain(&vec![0.0; layout.dim()])?;
        for (c, &v) in layout.coords().iter().zip(x) {
            match *c {
                Coord::R0b { region } => p.r0b[region.unwrap_or(0)] = v,
                Coord::F { region, phase } => p.regions[region].values.f[phase] = v,
                Coord::Psi { region, segment } => p.regions[region].values.psi[segment] = v,
                Coord::Phi { region } => p.regions[region].phi = v,
            }
        }
        Ok(p)
    }
}
