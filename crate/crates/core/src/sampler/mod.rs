//! Hamiltonian Monte Carlo with step-size and diagonal metric adaptation,
//! multi-chain orchestration and convergence diagnostics.

mod diagnostics;
mod hmc;

use rand_chacha::ChaCha20Rng;

pub use diagnostics::{diagnose, split_rhat, bulk_ess, Diagnostics, ParamDiagnostics, TraceRow};
pub use hmc::{
    hmc_run, initialize_chains, leapfrog, Chain, PosteriorDraws, SamplerConfig,
    DIVERGENCE_THRESHOLD,
};

use crate::error::Result;

/// A differentiable log density on an unconstrained space.
pub trait Target: Sync {
    fn dim(&self) -> usize;

    fn log_density_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Random starting point for a chain.
    fn initial_draw(&self, rng: &mut ChaCha20Rng) -> Vec<f64> {
        use rand::Rng;
        (0..self.dim()).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    /// Values stored for each draw.
    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x{i}")).collect()
    }
}
