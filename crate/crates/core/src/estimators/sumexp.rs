use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::pareto_quantile_unchecked;
use crate::sampler::stream::{uniform, Stream};
use crate::sampler::{exp_from_uniform, trial_seed};

/// Vertex weights along a path `u_0, ..., u_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathWeights {
    /// One weight per path vertex (`k + 1` entries).
    Fixed(Vec<f64>),
    /// Fresh i.i.d. Pareto(τ) weights in every trial.
    Pareto { tau: f64 },
}

impl PathWeights {
    fn validate(&self, k: usize, alpha: f64) -> Result<()> {
        match self {
            PathWeights::Fixed(w) => {
                if w.len() != k + 1 {
                    return Err(Error::LengthMismatch {
                        expected: k + 1,
                        got: w.len(),
                    });
                }
                if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                    return Err(Error::domain("path weights must be finite and positive"));
                }
            }
            PathWeights::Pareto { tau } => {
                if !(tau.is_finite() && *tau > 1.0) {
                    return Err(Error::domain("Pareto path weights need finite tau > 1"));
                }
                if 2.0 * alpha >= tau - 1.0 {
                    return Err(Error::domain(format!("need 2 alpha < tau - 1, got alpha = {alpha}, tau = {tau}")));
                }
            }
        }
        Ok(())
    }
}

/// `E[W^s] = (τ-1)/(τ-1-s)` for Pareto(τ) weights, `s < τ-1`.
pub fn weight_moment(tau: f64, s: f64) -> Result<f64> {
    if !(tau > 1.0 && s < tau - 1.0) {
        return Err(Error::domain(format!("moment of order {s} is infinite for tau = {tau}")));
    }
    Ok((tau - 1.0) / (tau - 1.0 - s))
}

/// `E[W^{2α}]`: with it as `c`, `E ∏ rate_i ≤ c^k ∏ dist_i^{-αd}` because each
/// weight enters at most two consecutive rates.
pub fn moment_constant(tau: f64, alpha: f64) -> Result<f64> {
    weight_moment(tau, 2.0 * alpha)
}

/// `rate_i = (w_i w_{i+1})^α dist_i^{-αd}`.
pub fn path_rates(weights: &[f64], dists: &[f64], alpha: f64, d: usize) -> Result<Vec<f64>> {
    if weights.len() != dists.len() + 1 {
        return Err(Error::LengthMismatch {
            expected: dists.len() + 1,
            got: weights.len(),
        });
    }
    let ad = alpha * d as f64;
    Ok(dists
        .iter()
        .enumerate()
        .map(|(i, &r)| (weights[i] * weights[i + 1]).powf(alpha) * r.powf(-ad))
        .collect())
}

/// `(e c t / k)^k ∏ dist_i^{-αd}`.
pub fn sum_exp_bound(t: f64, c: f64, alpha: f64, d: usize, dists: &[f64]) -> f64 {
    let k = dists.len() as f64;
    let ad = alpha * d as f64;
    let geo: f64 = dists.iter().map(|r| r.powf(-ad)).product();
    (std::f64::consts::E * c * t / k).powf(k) * geo
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumExpEstimate {
    pub k: usize,
    pub t: f64,
    pub c: f64,
    pub trials: usize,
    pub successes: usize,
    pub p_hat: f64,
    pub sigma: f64,
    pub bound: f64,
}

impl SumExpEstimate {
    /// `p_hat ≤ bound + 3σ`.
    pub fn respects_bound(&self) -> bool {
        self.p_hat <= self.bound + 3.0 * self.sigma
    }
}

fn check_common(dists: &[f64], alpha: f64, d: usize, t: f64) -> Result<()> {
    if dists.is_empty() {
        return Err(Error::domain("need at least one path edge"));
    }
    if dists.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::domain("distances must be finite and positive"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) || d == 0 {
        return Err(Error::domain("need alpha > 0 and d >= 1"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::domain("t must be finite and nonnegative"));
    }
    Ok(())
}

/// Monte Carlo `Pr[X_1 + ... + X_k ≤ t]` with independent `X_i ~ Exp(rate_i)`
/// together with the analytic bound.
#[allow(clippy::too_many_arguments)]
pub fn sum_exp_tail(
    weights: &PathWeights,
    dists: &[f64],
    alpha: f64,
    d: usize,
    t: f64,
    c: f64,
    trials: usize,
    seed: u64,
) -> Result<SumExpEstimate> {
    check_common(dists, alpha, d, t)?;
    weights.validate(dists.len(), alpha)?;
    if trials == 0 {
        return Err(Error::domain("trials must be >= 1"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain("c must be finite and positive"));
    }
    let k = dists.len();
    let fixed_rates = match weights {
        PathWeights::Fixed(w) => Some(path_rates(w, dists, alpha, d)?),
        PathWeights::Pareto { .. } => None,
    };
    let successes = (0..trials as u64)
        .into_par_iter()
        .filter(|&i| {
            let s = trial_seed(seed, i);
            let rates = match (&fixed_rates, weights) {
                (Some(r), _) => r.clone(),
                (None, PathWeights::Pareto { tau }) => {
                    let w: Vec<f64> = (0..=k as u64)
                        .map(|j| pareto_quantile_unchecked(uniform(s, Stream::Weight, &[j]), *tau))
                        .collect();
                    path_rates(&w, dists, alpha, d).expect("lengths match")
                }
                (None, PathWeights::Fixed(_)) => unreachable!(),
            };
            let mut sum = 0.0;
            for (j, &rate) in rates.iter().enumerate() {
                sum += exp_from_uniform(uniform(s, Stream::Cost, &[j as u64]), rate);
                if sum > t {
                    return false;
                }
            }
            true
        })
        .count();
    let n = trials as f64;
    let p_hat = successes as f64 / n;
    Ok(SumExpEstimate {
        k,
        t,
        c,
        trials,
        successes,
        p_hat,
        sigma: (p_hat * (1.0 - p_hat) / n).sqrt(),
        bound: sum_exp_bound(t, c, alpha, d, dists),
    })
}

const QUAD_NODES: usize = 800;

/// Closed form of `Pr[X ≤ t]` for a single edge of length `dist`; Pareto
/// endpoint weights are integrated out by a midpoint rule after the change
/// of variables `1 - u = v^4` in quantile space.
pub fn single_exp_cdf(weights: &PathWeights, dist: f64, alpha: f64, d: usize, t: f64) -> Result<f64> {
    check_common(&[dist], alpha, d, t)?;
    weights.validate(1, alpha)?;
    let geo = dist.powf(-alpha * d as f64);
    match weights {
        PathWeights::Fixed(w) => {
            let rate = (w[0] * w[1]).powf(alpha) * geo;
            Ok(-(-rate * t).exp_m1())
        }
        PathWeights::Pareto { tau } => {
            let m = QUAD_NODES;
            let nodes: Vec<(f64, f64)> = (0..m)
                .map(|i| {
                    let v = (i as f64 + 0.5) / m as f64;
                    let w = v.powf(-4.0 * alpha / (tau - 1.0));
                    (w, 4.0 * v.powi(3) / m as f64)
                })
                .collect();
            let total: f64 = nodes
                .iter()
                .map(|&(a, wa)| wa * nodes.iter().map(|&(b, wb)| wb * -(-a * b * geo * t).exp_m1()).sum::<f64>())
                .sum();
            Ok(total)
        }
    }
}

/// Smallest `c` such that the single-edge closed form at `dist = 1` stays
/// below `e c t` on the grid `ts`.
pub fn calibrate_c_k1(weights: &PathWeights, alpha: f64, d: usize, ts: &[f64]) -> Result<f64> {
    if ts.is_empty() || ts.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::domain("calibration grid must be nonempty and positive"));
    }
    let mut c = 0.0f64;
    for &t in ts {
        let p = single_exp_cdf(weights, 1.0, alpha, d, t)?;
        c = c.max(p / (std::f64::consts::E * t));
    }
    Ok(c)
}
