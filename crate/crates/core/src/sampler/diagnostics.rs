use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::PosteriorDraws;
use crate::stats::{mean, variance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    /// Rank-normalized split R-hat; `None` when every draw is identical.
    pub rhat: Option<f64>,
    /// Bulk effective sample size; `None` when every draw is identical.
    pub ess: Option<f64>,
    pub degenerate: bool,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub params: Vec<ParamDiagnostics>,
    pub n_chains: usize,
    pub n_iters: usize,
    pub divergent: usize,
    /// Mean acceptance statistic per chain.
    pub mean_accept: Vec<f64>,
    /// Post-warmup step size per chain.
    pub step_size: Vec<f64>,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> Option<f64> {
        self.params
            .iter()
            .filter_map(|p| p.rhat)
            .fold(None, |m, r| Some(m.map_or(r, |m: f64| m.max(r))))
    }

    /// True when no parameter is degenerate and every R-hat is below `threshold`.
    pub fn converged(&self, threshold: f64) -> bool {
        self.params
            .iter()
            .all(|p| p.rhat.is_some_and(|r| r < threshold))
    }

    pub fn get(&self, name: &str) -> Option<&ParamDiagnostics> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// One value of the trace table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub chain: usize,
    pub parameter: String,
    pub value: f64,
}

impl PosteriorDraws {
    /// Long-format trace table `(iteration, chain, parameter, value)`.
    pub fn trace_rows(&self) -> impl Iterator<Item = TraceRow> + '_ {
        self.chains.iter().enumerate().flat_map(move |(c, chain)| {
            chain.draws.iter().enumerate().flat_map(move |(it, d)| {
                self.names.iter().zip(d).map(move |(name, v)| TraceRow {
                    iteration: it,
                    chain: c,
                    parameter: name.clone(),
                    value: *v,
                })
            })
        })
    }
}

pub fn diagnose(draws: &PosteriorDraws) -> Diagnostics {
    let params = (0..draws.dim())
        .map(|i| {
            let chains = draws.column(i);
            let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
            let degenerate = pooled.iter().all(|v| *v == pooled[0]);
            let (rhat, ess) = if degenerate || draws.n_iters() < 4 {
                (None, None)
            } else {
                (Some(split_rhat(&chains)), Some(bulk_ess(&chains)))
            };
            ParamDiagnostics {
                name: draws.names[i].clone(),
                rhat,
                ess,
                degenerate,
                mean: mean(&pooled),
                sd: variance(&pooled).sqrt(),
            }
        })
        .collect();
    Diagnostics {
        params,
        n_chains: draws.n_chains(),
        n_iters: draws.n_iters(),
        divergent: draws.n_divergent(),
        mean_accept: draws.chains.iter().map(|c| mean(&c.accept_stat)).collect(),
        step_size: draws
            .chains
            .iter()
            .map(|c| c.step_size.last().copied().unwrap_or(f64::NAN))
            .collect(),
    }
}

/// Split every chain in half (dropping a middle draw for odd lengths).
fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [c[..h].to_vec(), c[c.len() - h..].to_vec()]
        })
        .collect()
}

/// Replace values by normal scores of their pooled ranks (average ranks for ties).
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut idx: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, v)| v.iter().enumerate().map(move |(i, x)| (*x, c, i)))
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s = idx.len() as f64;
    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut k = 0;
    while k < idx.len() {
        let mut end = k;
        while end + 1 < idx.len() && idx[end + 1].0 == idx[k].0 {
            end += 1;
        }
        let rank = (k + end) as f64 / 2.0 + 1.0;
        let z = normal.inverse_cdf((rank - 0.375) / (s + 0.25));
        for &(_, c, i) in &idx[k..=end] {
            out[c][i] = z;
        }
        k = end + 1;
    }
    out
}

fn rhat_of(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| variance(c)).collect::<Vec<_>>());
    let b = n * variance(&means);
    let var_plus = (n - 1.0) / n * w + b / n;
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    (var_plus / w).sqrt()
}

/// Rank-normalized split R-hat.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    rhat_of(&rank_normalize(&split(chains)))
}

/// Bulk effective sample size of rank-normalized split chains, using
/// Geyer's initial monotone sequence; capped at the number of draws.
pub fn bulk_ess(chains: &[Vec<f64>]) -> f64 {
    let z = rank_normalize(&split(chains));
    let m = z.len();
    let n = z[0].len();
    let total = (m * n) as f64;
    let means: Vec<f64> = z.iter().map(|c| mean(c)).collect();
    let acov = |c: usize, lag: usize| -> f64 {
        let x = &z[c];
        let mu = means[c];
        (0..n - lag)
            .map(|t| (x[t] - mu) * (x[t + lag] - mu))
            .sum::<f64>()
            / n as f64
    };
    let w = mean(&(0..m).map(|c| acov(c, 0) * n as f64 / (n as f64 - 1.0)).collect::<Vec<_>>());
    let b_over_n = variance(&means);
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    if !(var_plus > 0.0) {
        return total;
    }
    let rho = |lag: usize| -> f64 {
        let mean_acov = (0..m).map(|c| acov(c, lag)).sum::<f64>() / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let mut pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    (total / tau.max(1.0)).min(total)
}
