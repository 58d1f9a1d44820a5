use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{wilson_interval, ModelConfig, Process};
use crate::error::{Error, Result};
use crate::kernels::{delta_exponent, ModelParams};
use crate::metrics::{graph_distance, hop_ball_series};
use crate::sampler::trial_seed;

/// Median of `values`; the mean of the two middle elements for even lengths.
/// Infinite entries sort last.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return Err(Error::domain("median needs a nonempty list without NaN"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Nearest-rank empirical quantile, `q ∈ (0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return Err(Error::domain("quantile needs a nonempty list without NaN"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::domain(format!("quantile level must lie in (0, 1], got {q}")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Ok(v[rank - 1])
}

/// Theoretical polylogarithmic exponent `Δ(min{α, τ-2})` (`Δ(α)` without weights).
pub fn reference_delta(params: &ModelParams) -> Result<f64> {
    let beta = if params.tau.is_finite() {
        params.alpha.min(params.tau - 2.0)
    } else {
        params.alpha
    };
    delta_exponent(beta)
}

/// Least-squares fit of `log median = a + Δ log log dist`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub delta_hat: f64,
    pub intercept: f64,
    pub r2: f64,
    pub residuals: Vec<f64>,
    pub reference_delta: Option<f64>,
}

/// Fit the distance exponent from `(dist, median d_G)` samples.
///
/// Needs at least four distinct distances above 1 spanning two decades, and
/// positive finite medians.
pub fn fit_distance_exponent(samples: &[(f64, f64)], params: Option<&ModelParams>) -> Result<ExponentFit> {
    if samples.iter().any(|&(r, m)| !(r > 1.0 && r.is_finite() && m > 0.0 && m.is_finite())) {
        return Err(Error::domain("fit needs finite dist > 1 and finite positive medians"));
    }
    let mut distinct: Vec<f64> = samples.iter().map(|s| s.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::domain("degenerate regressor: all distances are equal"));
    }
    if distinct.len() < 4 || distinct[distinct.len() - 1] / distinct[0] < 100.0 {
        return Err(Error::domain("need at least 4 distinct distances spanning 2 decades"));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln().ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let fit = super::linear_fit(&xs, &ys)?;
    Ok(ExponentFit {
        delta_hat: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        residuals: fit.residuals,
        reference_delta: params.map(reference_delta).transpose()?,
    })
}

/// Median graph distance per pair over independent realizations.
///
/// Returns `(mean geometric distance, median d_G)` per pair; unreachable
/// pairs count as infinite distance.
pub fn median_distances(config: &ModelConfig, pairs: &[(usize, usize)], trials: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    config.validate()?;
    if config.process == Process::Cffp {
        return Err(Error::domain("graph distances need a graph model"));
    }
    if trials == 0 || pairs.is_empty() {
        return Err(Error::domain("need trials >= 1 and at least one pair"));
    }
    let runs: Vec<Vec<(f64, f64)>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let r = config.realization(trial_seed(seed, i))?;
            pairs
                .iter()
                .map(|&(x, y)| {
                    let d = graph_distance(&r, x, y)?.map_or(f64::INFINITY, f64::from);
                    Ok((r.dist(x, y), d))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    (0..pairs.len())
        .map(|p| {
            let geo = runs.iter().map(|run| run[p].0).sum::<f64>() / trials as f64;
            let hops: Vec<f64> = runs.iter().map(|run| run[p].1).collect();
            Ok((geo, median(&hops)?))
        })
        .collect()
}

/// Per-k frequency of `max_geo_radius(B(root, k)) ≤ r(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub root: usize,
    pub ks: Vec<u32>,
    pub radii: Vec<f64>,
    pub trials: usize,
    pub successes: Vec<usize>,
    pub frequencies: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    /// `max_radius_samples[j][i]`: radius of the `ks[j]`-ball in trial `i`.
    pub max_radius_samples: Vec<Vec<f64>>,
}

/// Sample the maximal geometric radius of the hop balls `B(root, k)`.
pub fn ball_radius_samples(config: &ModelConfig, root: usize, ks: &[u32], trials: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    if config.process == Process::Cffp {
        return Err(Error::domain("hop balls need a graph model"));
    }
    if trials == 0 || ks.is_empty() {
        return Err(Error::domain("need trials >= 1 and at least one k"));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("k grid must be strictly increasing"));
    }
    let runs: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let r = config.realization(trial_seed(seed, i))?;
            Ok(hop_ball_series(&r, root, ks)?.max_geo_radius)
        })
        .collect::<Result<_>>()?;
    Ok((0..ks.len()).map(|j| runs.iter().map(|run| run[j]).collect()).collect())
}

pub fn shape_containment(
    config: &ModelConfig,
    root: usize,
    ks: &[u32],
    radius: impl Fn(u32) -> f64,
    trials: usize,
    seed: u64,
) -> Result<ShapeReport> {
    let samples = ball_radius_samples(config, root, ks, trials, seed)?;
    ShapeReport::from_samples(root, ks, samples, radius)
}

impl ShapeReport {
    /// Containment frequencies from radius samples laid out as returned by
    /// [`ball_radius_samples`].
    pub fn from_samples(root: usize, ks: &[u32], samples: Vec<Vec<f64>>, radius: impl Fn(u32) -> f64) -> Result<Self> {
        if samples.len() != ks.len() {
            return Err(Error::LengthMismatch {
                expected: ks.len(),
                got: samples.len(),
            });
        }
        let trials = samples.first().map_or(0, Vec::len);
        if trials == 0 || samples.iter().any(|s| s.len() != trials) {
            return Err(Error::domain("every k needs the same nonzero number of samples"));
        }
        let radii: Vec<f64> = ks.iter().map(|&k| radius(k)).collect();
        let successes: Vec<usize> = samples
            .iter()
            .zip(&radii)
            .map(|(s, &r)| s.iter().filter(|&&x| x <= r).count())
            .collect();
        let mut ci_low = Vec::with_capacity(ks.len());
        let mut ci_high = Vec::with_capacity(ks.len());
        for &s in &successes {
            let (lo, hi) = wilson_interval(s, trials)?;
            ci_low.push(lo);
            ci_high.push(hi);
        }
        Ok(ShapeReport {
            root,
            ks: ks.to_vec(),
            radii,
            trials,
            frequencies: successes.iter().map(|&s| s as f64 / trials as f64).collect(),
            successes,
            ci_low,
            ci_high,
            max_radius_samples: samples,
        })
    }

    /// `k,radius,frequency,ci_low,ci_high`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,radius,frequency,ci_low,ci_high\n");
        for j in 0..self.ks.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.ks[j], self.radii[j], self.frequencies[j], self.ci_low[j], self.ci_high[j]
            ));
        }
        out
    }
}

/// The `c` in `r(k) = exp(c k^{1/Δ})` matching the `q`-quantile of observed
/// radii at `k`. Radii below 1 give `c = 0`.
pub fn fit_shape_constant(radii: &[f64], k: u32, delta: f64, q: f64) -> Result<f64> {
    if k == 0 || !(delta > 0.0) {
        return Err(Error::domain("fit_shape_constant needs k >= 1 and delta > 0"));
    }
    let r = quantile(radii, q)?;
    Ok(r.ln().max(0.0) / f64::from(k).powf(1.0 / delta))
}

/// `r(k) = exp(c k^{1/Δ})`.
pub fn shape_radius(k: u32, c: f64, delta: f64) -> f64 {
    (c * f64::from(k).powf(1.0 / delta)).exp()
}
