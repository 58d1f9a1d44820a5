//! Monte Carlo estimators, exact enumerations and fits.

mod bk;
mod fit;
mod growth;
mod sumexp;

pub use bk::*;
pub use fit::*;
pub use growth::*;
pub use sumexp::*;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{tail_bound_lrp, tail_bound_sfp, BoundConstants, ModelParams};
use crate::metrics::{cost_distances, graph_distances_to, Geometry, LazyFpp};
use crate::sampler::{trial_seed, BoxSpec, Budget, CffpField, ModelTag, Realization};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval at 95% for `successes` out of `trials`.
pub fn wilson_interval(successes: usize, trials: usize) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::domain("wilson_interval needs trials >= 1"));
    }
    if successes > trials {
        return Err(Error::domain("successes exceed trials"));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let hi = if successes == trials { 1.0 } else { (center + half).clamp(p, 1.0) };
    Ok((lo, hi))
}

/// The random process a Monte Carlo experiment samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Process {
    Lrp,
    Sfp,
    Girg,
    Cffp,
}

impl Process {
    pub fn graph_tag(self) -> Option<ModelTag> {
        match self {
            Process::Lrp => Some(ModelTag::Lrp),
            Process::Sfp => Some(ModelTag::Sfp),
            Process::Girg => Some(ModelTag::Girg),
            Process::Cffp => None,
        }
    }
}

impl std::str::FromStr for Process {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lrp" => Ok(Process::Lrp),
            "sfp" => Ok(Process::Sfp),
            "girg" => Ok(Process::Girg),
            "cffp" => Ok(Process::Cffp),
            other => Err(Error::domain(format!("unknown model {other:?}"))),
        }
    }
}

/// Model, window and parameters of a Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub process: Process,
    pub box_spec: BoxSpec,
    pub params: ModelParams,
    #[serde(default)]
    pub budget: Budget,
}

impl ModelConfig {
    pub fn new(process: Process, box_spec: BoxSpec, params: ModelParams) -> Self {
        ModelConfig {
            process,
            box_spec,
            params,
            budget: Budget::default(),
        }
    }

    pub fn with_budget(mut self, budget: Budget) -> Self {
        self.budget = budget;
        self
    }

    pub fn vertex_count(&self) -> Result<usize> {
        self.box_spec.vertex_count()
    }

    /// Check the configuration can be instantiated.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.box_spec.d != self.params.d {
            return Err(Error::domain("box dimension does not match model dimension"));
        }
        let n = self.vertex_count()?;
        match self.process {
            Process::Cffp => {
                if self.params.lambda != 1.0 {
                    return Err(Error::domain("CFFP uses lambda = 1"));
                }
                self.budget.check_complete(n)
            }
            _ => self.budget.check_sparse(n),
        }
    }

    pub(crate) fn realization(&self, seed: u64) -> Result<Realization> {
        let tag = self
            .process
            .graph_tag()
            .ok_or_else(|| Error::domain("CFFP has no graph realization"))?;
        Realization::new(&self.box_spec, &self.params, tag, seed, &self.budget)
    }

    pub(crate) fn cffp_field(&self, seed: u64) -> Result<CffpField> {
        CffpField::sample(&self.box_spec, &self.params, seed, &self.budget)
    }
}

/// A distance threshold: hops for graph distance, or a cost for passage time
/// (FPP on graph models, CFFP on the complete box).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threshold {
    Hops(u32),
    Cost(f64),
}

impl Threshold {
    pub fn value(self) -> f64 {
        match self {
            Threshold::Hops(k) => k as f64,
            Threshold::Cost(t) => t,
        }
    }
}

/// Estimated `Pr[dist(x, y) <= threshold]`. For GIRG, `dist` is the mean
/// geometric distance over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub x: usize,
    pub y: usize,
    pub dist: f64,
    pub threshold: Threshold,
    pub trials: usize,
    pub successes: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl TailEstimate {
    pub fn from_counts(x: usize, y: usize, dist: f64, threshold: Threshold, successes: usize, trials: usize) -> Result<Self> {
        let (ci_low, ci_high) = wilson_interval(successes, trials)?;
        Ok(TailEstimate {
            x,
            y,
            dist,
            threshold,
            trials,
            successes,
            p_hat: successes as f64 / trials as f64,
            ci_low,
            ci_high,
        })
    }
}

/// CSV with header `x,y,dist,threshold,trials,successes,p_hat,ci_low,ci_high`.
pub fn tail_estimates_csv(estimates: &[TailEstimate]) -> String {
    let mut out = String::from("x,y,dist,threshold,trials,successes,p_hat,ci_low,ci_high\n");
    for e in estimates {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            e.x,
            e.y,
            e.dist,
            e.threshold.value(),
            e.trials,
            e.successes,
            e.p_hat,
            e.ci_low,
            e.ci_high
        )
        .unwrap();
    }
    out
}

/// Estimate `Pr[dist(x, y) <= threshold]` over `trials` realizations.
pub fn mc_tail(config: &ModelConfig, x: usize, y: usize, threshold: Threshold, trials: usize, seed: u64) -> Result<TailEstimate> {
    Ok(mc_tail_grid(config, &[(x, y)], &[threshold], trials, seed)?.remove(0))
}

/// Tail estimates for every pair and threshold. Each trial draws one
/// realization shared by all pairs and thresholds, so estimates are
/// monotone in the threshold. Results are ordered pair-major.
pub fn mc_tail_grid(
    config: &ModelConfig,
    pairs: &[(usize, usize)],
    thresholds: &[Threshold],
    trials: usize,
    seed: u64,
) -> Result<Vec<TailEstimate>> {
    config.validate()?;
    if trials == 0 {
        return Err(Error::domain("trials must be >= 1"));
    }
    if pairs.is_empty() || thresholds.is_empty() {
        return Err(Error::domain("need at least one pair and one threshold"));
    }
    let n = config.vertex_count()?;
    for &(x, y) in pairs {
        for id in [x, y] {
            if id >= n {
                return Err(Error::InvalidVertex { id, count: n });
            }
        }
    }
    let hop = matches!(thresholds[0], Threshold::Hops(_));
    if thresholds.iter().any(|t| matches!(t, Threshold::Hops(_)) != hop) {
        return Err(Error::domain("thresholds must be all hops or all costs"));
    }
    if hop && config.process == Process::Cffp {
        return Err(Error::domain("CFFP is a complete graph; use cost thresholds"));
    }
    if thresholds.iter().any(|t| !(t.value() >= 0.0)) {
        return Err(Error::domain("thresholds must be nonnegative"));
    }
    let max_t = thresholds.iter().map(|t| t.value()).fold(0.0, f64::max);
    let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(x, y) in pairs {
        by_source.entry(x).or_default().push(y);
    }

    // For every trial: the distance of each pair, capped at the largest
    // threshold, and its geometric length (random for GIRG).
    let per_trial: Vec<Vec<(f64, f64)>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<(f64, f64)>> {
            let s = trial_seed(seed, i);
            let mut found: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            let realization = match config.process {
                Process::Cffp => None,
                _ => Some(config.realization(s)?),
            };
            match (&realization, hop) {
                (Some(r), true) => {
                    for (&x, ys) in &by_source {
                        let d = graph_distances_to(r, x, ys, max_t as u32)?;
                        for (&y, d) in ys.iter().zip(d) {
                            found.insert((x, y), d.map_or(f64::INFINITY, |d| d as f64));
                        }
                    }
                }
                (Some(r), false) => {
                    let fpp = LazyFpp { realization: r, seed: s };
                    for (&x, ys) in &by_source {
                        let d = cost_distances(&fpp, x, Some(max_t))?;
                        for &y in ys {
                            found.insert((x, y), d[y].unwrap_or(f64::INFINITY));
                        }
                    }
                }
                (None, _) => {
                    let field = config.cffp_field(s)?;
                    for (&x, ys) in &by_source {
                        let d = cost_distances(&field, x, Some(max_t))?;
                        for &y in ys {
                            found.insert((x, y), d[y].unwrap_or(f64::INFINITY));
                        }
                    }
                }
            }
            Ok(pairs
                .iter()
                .map(|&(x, y)| {
                    let geo = match &realization {
                        Some(r) => r.dist(x, y),
                        None => config.box_spec.geo_dist(x, y),
                    };
                    (found[&(x, y)], geo)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(pairs.len() * thresholds.len());
    for (j, &(x, y)) in pairs.iter().enumerate() {
        let dist = per_trial.iter().map(|d| d[j].1).sum::<f64>() / trials as f64;
        for &th in thresholds {
            let successes = per_trial.iter().filter(|d| d[j].0 <= th.value()).count();
            out.push(TailEstimate::from_counts(x, y, dist, th, successes, trials)?);
        }
    }
    Ok(out)
}

/// A family of closed-form tail bounds with the constants to search over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundFamily {
    Lrp { params: ModelParams, eps_grid: Vec<f64> },
    Sfp { params: ModelParams, constants: Vec<BoundConstants> },
}

/// Evaluation of one candidate constant set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub constants: serde_json::Value,
    pub complies: bool,
    /// `min log(bound) - log(ci_high)` over the grid.
    pub margin: f64,
    /// Grid points where `ci_low > bound`.
    pub exceedances: usize,
}

/// Per-point comparison for the chosen candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompliancePoint {
    pub dist: f64,
    pub k: u32,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: f64,
    pub log_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceReport {
    /// Whether some candidate has `ci_low <= bound` at every point.
    pub complies: bool,
    /// The compliant candidate with the largest margin, or the largest
    /// margin overall when none complies.
    pub best: CandidateResult,
    pub candidates: Vec<CandidateResult>,
    pub points: Vec<CompliancePoint>,
}

impl ComplianceReport {
    pub fn best_margin(&self) -> f64 {
        self.best.margin
    }
}

/// Search `family` for constants under which every estimate's lower Wilson
/// bound lies below the closed-form tail bound.
pub fn bound_compliance(estimates: &[TailEstimate], family: &BoundFamily) -> Result<ComplianceReport> {
    if estimates.is_empty() {
        return Err(Error::domain("bound_compliance needs estimates"));
    }
    let ks: Vec<u32> = estimates
        .iter()
        .map(|e| match e.threshold {
            Threshold::Hops(k) if k >= 1 => Ok(k),
            _ => Err(Error::domain("hop-distance bounds need thresholds k >= 1")),
        })
        .collect::<Result<_>>()?;
    let candidates: Vec<(serde_json::Value, Box<dyn Fn(u32, f64) -> Result<f64> + '_>)> = match family {
        BoundFamily::Lrp { params, eps_grid } => eps_grid
            .iter()
            .map(|&eps| {
                let f: Box<dyn Fn(u32, f64) -> Result<f64>> = Box::new(move |k, d| tail_bound_lrp(k, d, eps, params));
                (serde_json::json!({ "epsilon": eps }), f)
            })
            .collect(),
        BoundFamily::Sfp { params, constants } => constants
            .iter()
            .map(|bc| {
                let f: Box<dyn Fn(u32, f64) -> Result<f64>> = Box::new(move |k, d| tail_bound_sfp(k, d, bc, params));
                (serde_json::to_value(bc).unwrap(), f)
            })
            .collect(),
    };
    if candidates.is_empty() {
        return Err(Error::domain("constants grid is empty"));
    }
    let mut results = Vec::with_capacity(candidates.len());
    let mut point_sets = Vec::with_capacity(candidates.len());
    for (constants, bound) in &candidates {
        let mut points = Vec::with_capacity(estimates.len());
        for (e, &k) in estimates.iter().zip(&ks) {
            let b = bound(k, e.dist)?;
            points.push(CompliancePoint {
                dist: e.dist,
                k,
                ci_low: e.ci_low,
                ci_high: e.ci_high,
                bound: b,
                log_margin: b.ln() - e.ci_high.ln(),
            });
        }
        let exceedances = points.iter().filter(|p| p.ci_low > p.bound).count();
        let margin = points.iter().map(|p| p.log_margin).fold(f64::INFINITY, f64::min);
        results.push(CandidateResult {
            constants: constants.clone(),
            complies: exceedances == 0,
            margin,
            exceedances,
        });
        point_sets.push(points);
    }
    let complies = results.iter().any(|r| r.complies);
    let best_idx = (0..results.len())
        .filter(|&i| results[i].complies || !complies)
        .max_by(|&a, &b| results[a].margin.total_cmp(&results[b].margin))
        .unwrap();
    Ok(ComplianceReport {
        complies,
        best: results[best_idx].clone(),
        points: point_sets.swap_remove(best_idx),
        candidates: results,
    })
}
