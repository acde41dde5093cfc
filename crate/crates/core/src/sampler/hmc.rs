use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Target;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup_iters: usize,
    pub sampling_iters: usize,
    pub target_accept: f64,
    /// Leapfrog steps per transition are drawn uniformly from `1..=max_leapfrog`.
    pub max_leapfrog: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup_iters: 1000,
            sampling_iters: 1000,
            target_accept: 0.8,
            max_leapfrog: 64,
            seed: 20201107,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.sampling_iters == 0 || self.max_leapfrog == 0 {
            return Err(Error::Config(
                "chains, sampling_iters and max_leapfrog must be positive".into(),
            ));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        Ok(())
    }
}

/// Energy error above which a transition counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

const MAX_INIT_ATTEMPTS: usize = 100;

/// One chain's post-warmup output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub seed: u64,
    pub stream: u64,
    /// Constrained draws, one row per iteration.
    pub draws: Vec<Vec<f64>>,
    pub accept_stat: Vec<f64>,
    pub divergent: Vec<bool>,
    pub n_leapfrog: Vec<usize>,
    /// Step size used by each sampling iteration.
    pub step_size: Vec<f64>,
    /// Diagonal inverse mass matrix after warmup.
    pub inv_metric: Vec<f64>,
    pub log_density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub chains: Vec<Chain>,
}

impl PosteriorDraws {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_iters(&self) -> usize {
        self.chains.first().map_or(0, |c| c.draws.len())
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// Every draw from every chain, chain-major.
    pub fn pooled(&self) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .flat_map(|c| c.draws.iter().cloned())
            .collect()
    }

    /// Values of parameter `i` per chain.
    pub fn column(&self, i: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.draws.iter().map(|d| d[i]).collect())
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn n_divergent(&self) -> usize {
        self.chains
            .iter()
            .map(|c| c.divergent.iter().filter(|d| **d).count())
            .sum()
    }
}

/// Diagonal-metric phase space point.
#[derive(Debug, Clone)]
struct Point {
    x: Vec<f64>,
    lp: f64,
    grad: Vec<f64>,
}

fn evaluate<T: Target + ?Sized>(target: &T, x: Vec<f64>) -> Option<Point> {
    match target.log_density_and_gradient(&x) {
        Ok((lp, grad)) if lp.is_finite() && grad.iter().all(|g| g.is_finite()) => {
            Some(Point { x, lp, grad })
        }
        _ => None,
    }
}

/// `n_steps` leapfrog steps with a diagonal inverse metric. Returns `None`
/// when the target or its gradient becomes non-finite along the path.
pub fn leapfrog<T: Target + ?Sized>(
    target: &T,
    x: &[f64],
    p: &[f64],
    step: f64,
    n_steps: usize,
    inv_metric: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let start = evaluate(target, x.to_vec())?;
    let (end, p) = leapfrog_from(target, start, p.to_vec(), step, n_steps, inv_metric)?;
    Some((end.x, p))
}

fn leapfrog_from<T: Target + ?Sized>(
    target: &T,
    mut pt: Point,
    mut p: Vec<f64>,
    step: f64,
    n_steps: usize,
    inv_metric: &[f64],
) -> Option<(Point, Vec<f64>)> {
    for _ in 0..n_steps {
        for (pi, g) in p.iter_mut().zip(&pt.grad) {
            *pi += 0.5 * step * g;
        }
        let x: Vec<f64> = pt
            .x
            .iter()
            .zip(&p)
            .zip(inv_metric)
            .map(|((xi, pi), m)| xi + step * m * pi)
            .collect();
        pt = evaluate(target, x)?;
        for (pi, g) in p.iter_mut().zip(&pt.grad) {
            *pi += 0.5 * step * g;
        }
    }
    Some((pt, p))
}

fn kinetic(p: &[f64], inv_metric: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
}

fn draw_momentum(rng: &mut ChaCha20Rng, inv_metric: &[f64]) -> Vec<f64> {
    inv_metric
        .iter()
        .map(|m| {
            let z: f64 = rng.sample(StandardNormal);
            z / m.sqrt()
        })
        .collect()
}

struct Transition {
    accept_stat: f64,
    divergent: bool,
}

fn transition<T: Target + ?Sized>(
    target: &T,
    current: &mut Point,
    step: f64,
    n_steps: usize,
    inv_metric: &[f64],
    rng: &mut ChaCha20Rng,
) -> Transition {
    let p0 = draw_momentum(rng, inv_metric);
    let h0 = -current.lp + kinetic(&p0, inv_metric);
    let proposal = leapfrog_from(target, current.clone(), p0, step, n_steps, inv_metric);
    let u: f64 = rng.random();
    let Some((pt, p)) = proposal else {
        return Transition {
            accept_stat: 0.0,
            divergent: true,
        };
    };
    let h1 = -pt.lp + kinetic(&p, inv_metric);
    let delta = h1 - h0;
    if !delta.is_finite() || delta > DIVERGENCE_THRESHOLD {
        return Transition {
            accept_stat: 0.0,
            divergent: true,
        };
    }
    let accept_stat = (-delta).exp().min(1.0);
    if u < accept_stat {
        *current = pt;
    }
    Transition {
        accept_stat,
        divergent: false,
    }
}

/// Dual averaging of the log step size towards a target acceptance.
#[derive(Debug, Clone)]
struct StepAdapter {
    mu: f64,
    hbar: f64,
    log_step_bar: f64,
    count: f64,
    delta: f64,
}

impl StepAdapter {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(step: f64, delta: f64) -> Self {
        Self {
            mu: (10.0 * step).ln(),
            hbar: 0.0,
            log_step_bar: 0.0,
            count: 0.0,
            delta,
        }
    }

    /// Update with an acceptance statistic, returning the next step size.
    fn update(&mut self, accept_stat: f64) -> f64 {
        self.count += 1.0;
        let eta = 1.0 / (self.count + Self::T0);
        self.hbar = (1.0 - eta) * self.hbar + eta * (self.delta - accept_stat);
        let log_step = self.mu - self.count.sqrt() / Self::GAMMA * self.hbar;
        let w = self.count.powf(-Self::KAPPA);
        self.log_step_bar = w * log_step + (1.0 - w) * self.log_step_bar;
        log_step.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_step_bar.exp()
    }
}

/// Double or halve the step until a single leapfrog step's acceptance
/// crosses one half.
fn reasonable_step<T: Target + ?Sized>(
    target: &T,
    current: &Point,
    mut step: f64,
    inv_metric: &[f64],
    rng: &mut ChaCha20Rng,
) -> f64 {
    let accept = |step: f64, rng: &mut ChaCha20Rng| {
        let p0 = draw_momentum(rng, inv_metric);
        let h0 = -current.lp + kinetic(&p0, inv_metric);
        match leapfrog_from(target, current.clone(), p0, step, 1, inv_metric) {
            Some((pt, p)) => {
                let d = h0 - (-pt.lp + kinetic(&p, inv_metric));
                if d.is_finite() {
                    d
                } else {
                    f64::NEG_INFINITY
                }
            }
            None => f64::NEG_INFINITY,
        }
    };
    let ln_half = 0.5f64.ln();
    let first = accept(step, rng);
    let direction = if first > ln_half { 1.0 } else { -1.0 };
    for _ in 0..50 {
        let next = step * 2f64.powf(direction);
        let a = accept(next, rng);
        if (direction > 0.0 && a <= ln_half) || (direction < 0.0 && a > ln_half) {
            return if direction > 0.0 { step } else { next };
        }
        step = next;
    }
    step
}

/// Diagonal variance estimate shrunk towards a small multiple of the
/// identity, as `n/(n+5) var + 1e-3 * 5/(n+5)`.
fn regularized_variance(window: &[Vec<f64>]) -> Vec<f64> {
    let n = window.len() as f64;
    let dim = window[0].len();
    (0..dim)
        .map(|i| {
            let col: Vec<f64> = window.iter().map(|x| x[i]).collect();
            let v = crate::stats::variance(&col);
            (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0))
        })
        .collect()
}

/// Warmup stages: initial step-size buffer, two metric windows (the second
/// covering the second half of warmup), then a terminal step-size buffer.
#[derive(Debug, Clone, Copy)]
struct Schedule {
    first_window: usize,
    second_window: usize,
    terminal: usize,
}

impl Schedule {
    fn new(warmup: usize) -> Self {
        if warmup < 20 {
            return Self {
                first_window: warmup,
                second_window: warmup,
                terminal: warmup,
            };
        }
        let w = warmup as f64;
        Self {
            first_window: (0.15 * w).round() as usize,
            second_window: (0.5 * w).round() as usize,
            terminal: (0.9 * w).round() as usize,
        }
    }
}

/// Draw an initial point for every chain.
pub fn initialize_chains<T: Target + ?Sized>(target: &T, cfg: &SamplerConfig) -> Result<Vec<Vec<f64>>> {
    (0..cfg.chains)
        .map(|c| {
            let mut rng = chain_rng(cfg.seed, c as u64);
            initial_point(target, &mut rng)
        })
        .collect()
}

fn chain_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn initial_point<T: Target + ?Sized>(target: &T, rng: &mut ChaCha20Rng) -> Result<Vec<f64>> {
    for _ in 0..MAX_INIT_ATTEMPTS {
        let x = target.initial_draw(rng);
        if evaluate(target, x.clone()).is_some() {
            return Ok(x);
        }
    }
    Err(Error::Sampler(format!(
        "no finite initial point in {MAX_INIT_ATTEMPTS} attempts"
    )))
}

/// Adaptive HMC on every chain in parallel.
pub fn hmc_run<T: Target + ?Sized>(target: &T, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let chains = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(target, cfg, c as u64))
        .collect::<Result<Vec<_>>>()?;
    let total: usize = chains.iter().map(|c| c.divergent.len()).sum();
    let divergent: usize = chains
        .iter()
        .map(|c| c.divergent.iter().filter(|d| **d).count())
        .sum();
    if 2 * divergent > total {
        return Err(Error::Sampler(format!(
            "{divergent} of {total} transitions diverged; raise target_accept to shrink the step size"
        )));
    }
    Ok(PosteriorDraws {
        names: target.names(),
        chains,
    })
}

fn run_chain<T: Target + ?Sized>(target: &T, cfg: &SamplerConfig, stream: u64) -> Result<Chain> {
    let mut rng = chain_rng(cfg.seed, stream);
    let x0 = initial_point(target, &mut rng)?;
    let mut current = evaluate(target, x0).expect("initial point was checked");
    let dim = current.x.len();
    let mut inv_metric = vec![1.0; dim];
    let mut step = reasonable_step(target, &current, 1.0, &inv_metric, &mut rng);
    let mut adapter = StepAdapter::new(step, cfg.target_accept);
    let sched = Schedule::new(cfg.warmup_iters);
    let mut window: Vec<Vec<f64>> = Vec::new();

    for it in 0..cfg.warmup_iters {
        let n_steps = rng.random_range(1..=cfg.max_leapfrog);
        let tr = transition(target, &mut current, step, n_steps, &inv_metric, &mut rng);
        step = adapter.update(tr.accept_stat);
        if it >= sched.first_window && it < sched.terminal {
            window.push(current.x.clone());
        }
        let window_end = it + 1 == sched.second_window || it + 1 == sched.terminal;
        if window_end && window.len() >= 10 {
            inv_metric = regularized_variance(&window);
            window.clear();
            step = reasonable_step(target, &current, step, &inv_metric, &mut rng);
            adapter = StepAdapter::new(step, cfg.target_accept);
        }
    }
    if cfg.warmup_iters > 0 {
        step = adapter.final_step();
    }

    let n = cfg.sampling_iters;
    let mut out = Chain {
        seed: cfg.seed,
        stream,
        draws: Vec::with_capacity(n),
        accept_stat: Vec::with_capacity(n),
        divergent: Vec::with_capacity(n),
        n_leapfrog: Vec::with_capacity(n),
        step_size: Vec::with_capacity(n),
        inv_metric: inv_metric.clone(),
        log_density: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let n_steps = rng.random_range(1..=cfg.max_leapfrog);
        let tr = transition(target, &mut current, step, n_steps, &inv_metric, &mut rng);
        out.draws.push(target.constrain(&current.x));
        out.accept_stat.push(tr.accept_stat);
        out.divergent.push(tr.divergent);
        out.n_leapfrog.push(n_steps);
        out.step_size.push(step);
        out.log_density.push(current.lp);
    }
    Ok(out)
}
