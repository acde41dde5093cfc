//! Small summary statistics used across the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance (`n - 1` denominator); zero for fewer than two values.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Linear-interpolation quantile of already sorted data (R type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Type-7 quantiles of unsorted data.
pub fn quantiles(x: &[f64], ps: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("quantile of empty sample".into()));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite {
            context: "quantile input".into(),
        });
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(ps.iter().map(|&p| quantile_sorted(&s, p)).collect())
}

/// Pointwise summary of a collection of draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub q05: f64,
    pub q25: f64,
    pub mean: f64,
    pub q75: f64,
    pub q95: f64,
}

impl Band {
    pub fn from_draws(x: &[f64]) -> Result<Self> {
        let q = quantiles(x, &[0.05, 0.25, 0.75, 0.95])?;
        Ok(Self {
            q05: q[0],
            q25: q[1],
            mean: mean(x),
            q75: q[2],
            q95: q[3],
        })
    }
}

/// Gaussian kernel density estimate evaluated on `points` equally spaced
/// values spanning the sample padded by three bandwidths. Bandwidth by
/// Silverman's rule.
pub fn kde(x: &[f64], points: usize) -> Result<Vec<(f64, f64)>> {
    if x.len() < 2 || points < 2 {
        return Err(Error::InvalidArgument(
            "density estimate needs at least two draws and two points".into(),
        ));
    }
    let n = x.len() as f64;
    let sd = variance(x).sqrt();
    let q = quantiles(x, &[0.25, 0.75])?;
    let iqr = (q[1] - q[0]) / 1.34;
    let spread = if iqr > 0.0 { sd.min(iqr) } else { sd };
    let bw = if spread > 0.0 {
        0.9 * spread * n.powf(-0.2)
    } else {
        1e-6 * x[0].abs().max(1.0)
    };
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * bw;
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * bw;
    let norm = 1.0 / (n * bw * (2.0 * std::f64::consts::PI).sqrt());
    Ok((0..points)
        .map(|k| {
            let g = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            let d = x
                .iter()
                .map(|v| {
                    let z = (g - v) / bw;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm;
            (g, d)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_matches_reference_values() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        // R: quantile(x, c(.05,.25,.5,.9)) -> 1.00 1.75 3.50 6.90
        let q = quantiles(&x, &[0.05, 0.25, 0.5, 0.9]).unwrap();
        for (a, b) in q.iter().zip([1.0, 1.75, 3.5, 6.9]) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn kde_integrates_to_about_one() {
        let x: Vec<f64> = (0..200).map(|k| ((k * 37) % 101) as f64 / 10.0).collect();
        let d = kde(&x, 512).unwrap();
        let h = d[1].0 - d[0].0;
        let total: f64 = d.iter().map(|p| p.1 * h).sum();
        assert!((total - 1.0).abs() < 0.01, "{total}");
    }
}
