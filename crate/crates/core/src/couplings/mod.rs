//! Seed-shared couplings between models and the dominance checks built on
//! them.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::kernels::{alpha_reduced_params, pareto_quantile_unchecked, tau_prime_max, KernelVariant, ModelParams};
use crate::sampler::stream::{derive_seed, uniform, Stream};
use crate::sampler::{sample_weights, trial_seed, BoxSpec, Budget, ModelTag, Realization, SampledGraph};

/// Which claim a [`CouplingReport`] checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CouplingKind {
    AlphaReduce,
    FppCffp,
    BlowupLRP,
    BlowupSFP,
    WeightDominance,
    Stitching,
}

/// One evaluated inequality `lhs <= rhs` (or a frequency against a target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub input: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub sigma: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub kind: CouplingKind,
    pub parameters: Map<String, Value>,
    pub trials: usize,
    pub violations: usize,
    pub details: Vec<CheckRecord>,
}

impl CouplingReport {
    fn new(kind: CouplingKind, trials: usize) -> Self {
        CouplingReport {
            kind,
            parameters: Map::new(),
            trials,
            violations: 0,
            details: Vec::new(),
        }
    }

    fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.parameters.insert(key.to_string(), value.into());
        self
    }

    fn push(&mut self, record: CheckRecord) {
        self.details.push(record);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// Records that failed their check.
    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.details.iter().filter(|r| r.violated)
    }
}

fn params_json(p: &ModelParams) -> Value {
    serde_json::to_value(p).expect("params serialize")
}

/// Sample `G(α, λ)` and `G(α′, λ^{α′/α})` with shared weights and edge
/// uniforms; the first must be a subgraph of the second.
pub fn couple_alpha(
    box_spec: &BoxSpec,
    params: &ModelParams,
    alpha_prime: f64,
    model_tag: ModelTag,
    seed: u64,
) -> Result<(SampledGraph, SampledGraph, CouplingReport)> {
    couple_alpha_with_budget(box_spec, params, alpha_prime, model_tag, seed, &Budget::default())
}

pub fn couple_alpha_with_budget(
    box_spec: &BoxSpec,
    params: &ModelParams,
    alpha_prime: f64,
    model_tag: ModelTag,
    seed: u64,
    budget: &Budget,
) -> Result<(SampledGraph, SampledGraph, CouplingReport)> {
    if model_tag == ModelTag::Girg {
        return Err(Error::domain("alpha coupling is defined for LRP and SFP"));
    }
    if !(alpha_prime > 1.0 && alpha_prime < params.alpha) {
        return Err(Error::domain(format!(
            "alpha coupling needs 1 < alpha' < alpha, got alpha' = {alpha_prime}, alpha = {}",
            params.alpha
        )));
    }
    let reduced = alpha_reduced_params(params, alpha_prime)?;
    let (g, g_prime) = rayon::join(
        || Realization::new(box_spec, params, model_tag, seed, budget).map(Realization::into_graph),
        || Realization::new(box_spec, &reduced, model_tag, seed, budget).map(Realization::into_graph),
    );
    let (g, g_prime) = (g?, g_prime?);
    let missing = g.edges().filter(|&(u, v)| !g_prime.has_edge(u, v)).count();
    let mut report = CouplingReport::new(CouplingKind::AlphaReduce, 1)
        .param("params", params_json(params))
        .param("reduced", params_json(&reduced))
        .param("seed", seed);
    report.violations = (missing > 0) as usize;
    report.push(CheckRecord {
        input: vec![seed as f64],
        lhs: g.edge_count() as f64,
        rhs: (g.edge_count() - missing) as f64,
        sigma: 0.0,
        violated: missing > 0,
    });
    Ok((g, g_prime, report))
}

/// [`couple_alpha`] over `trials` derived seeds.
pub fn couple_alpha_sweep(
    box_spec: &BoxSpec,
    params: &ModelParams,
    alpha_prime: f64,
    model_tag: ModelTag,
    trials: usize,
    seed: u64,
    budget: &Budget,
) -> Result<CouplingReport> {
    let runs: Vec<CouplingReport> = (0..trials as u64)
        .into_par_iter()
        .map(|i| couple_alpha_with_budget(box_spec, params, alpha_prime, model_tag, trial_seed(seed, i), budget).map(|r| r.2))
        .collect::<Result<_>>()?;
    let reduced = alpha_reduced_params(params, alpha_prime)?;
    let mut report = CouplingReport::new(CouplingKind::AlphaReduce, trials)
        .param("params", params_json(params))
        .param("reduced", params_json(&reduced))
        .param("seed", seed);
    for run in runs {
        report.violations += run.violations;
        report.details.extend(run.details);
    }
    Ok(report)
}

/// `(min{1,a}(1-e^{-b}), 1-e^{-ab})`.
pub fn min_exp_inequality(a: f64, b: f64) -> Result<(f64, f64)> {
    if !(a >= 0.0 && b >= 0.0) || a.is_infinite() || b.is_infinite() {
        return Err(Error::domain(format!("min_exp_inequality needs finite a, b >= 0, got ({a}, {b})")));
    }
    Ok((a.min(1.0) * -(-b).exp_m1(), -(-a * b).exp_m1()))
}

/// Monte Carlo comparison of `Pr[X <= t]` (an FPP edge on SFP: existence,
/// then an Exp(1) cost) with `Pr[Y <= t]` (a CFFP edge with rate
/// `a = (w_u w_v)^α dist^{-αd}`). A violation is `lhs - rhs > 3σ`.
pub fn fpp_cffp_edge_check(
    wu: f64,
    wv: f64,
    dist: f64,
    t: f64,
    params: &ModelParams,
    trials: usize,
    seed: u64,
) -> Result<CouplingReport> {
    params.validate()?;
    if !(wu >= 1.0 && wv >= 1.0) {
        return Err(Error::domain("weights must be >= 1"));
    }
    if !(dist >= 1.0) || dist.is_infinite() {
        return Err(Error::domain(format!("dist must be >= 1, got {dist}")));
    }
    if !(t >= 0.0) || t.is_infinite() {
        return Err(Error::domain(format!("t must be finite and >= 0, got {t}")));
    }
    if trials == 0 {
        return Err(Error::domain("trials must be >= 1"));
    }
    let a = (wu * wv).powf(params.alpha) * dist.powf(-params.alpha_d());
    let exist = match params.kernel {
        KernelVariant::MinForm => (params.lambda * a).min(1.0),
        KernelVariant::ExpForm => -(-params.lambda * a).exp_m1(),
    };
    let s = derive_seed(seed, Stream::Aux, 0);
    let (mut hits_x, mut hits_y) = (0usize, 0usize);
    for i in 0..trials as u64 {
        let present = uniform(s, Stream::Edge, &[i]) < exist;
        let x = -(-uniform(s, Stream::Cost, &[i, 0])).ln_1p();
        let y = -(-uniform(s, Stream::Cost, &[i, 1])).ln_1p() / a;
        hits_x += (present && x <= t) as usize;
        hits_y += (y <= t) as usize;
    }
    let n = trials as f64;
    let (px, py) = (hits_x as f64 / n, hits_y as f64 / n);
    let sigma = (px * (1.0 - px) / n + py * (1.0 - py) / n).sqrt();
    let violated = px - py > 3.0 * sigma;
    let mut report = CouplingReport::new(CouplingKind::FppCffp, trials)
        .param("params", params_json(params))
        .param("rate", a)
        .param("existence_prob", exist)
        .param("seed", seed);
    report.violations = violated as usize;
    report.push(CheckRecord {
        input: vec![wu, wv, dist, t],
        lhs: px,
        rhs: py,
        sigma,
        violated,
    });
    Ok(report)
}

/// Lattice coordinates of the `r^d` fine points attached to a coarse point.
pub fn blowup_box_coords(coarse: &[i64], r: usize) -> Result<Vec<Vec<i64>>> {
    if r == 0 {
        return Err(Error::domain("blow-up factor must be >= 1"));
    }
    let d = coarse.len();
    let count = r.checked_pow(d as u32).ok_or_else(|| Error::domain("blow-up box too large"))?;
    Ok((0..count)
        .map(|mut j| {
            coarse
                .iter()
                .map(|&c| {
                    let off = (j % r) as i64;
                    j /= r;
                    c * r as i64 + off
                })
                .collect()
        })
        .collect())
}

/// The fine box tiled by the blow-up of `coarse`.
pub fn fine_box(coarse: &BoxSpec, r: usize) -> Result<BoxSpec> {
    if r == 0 {
        return Err(Error::domain("blow-up factor must be >= 1"));
    }
    let side = coarse
        .side
        .checked_mul(r)
        .ok_or_else(|| Error::domain("fine box side overflows"))?;
    let b = BoxSpec::new(coarse.d, side)?;
    let origin = (0..coarse.d)
        .map(|j| coarse.origin.get(j).copied().unwrap_or(0) * r as i64)
        .collect();
    b.with_origin(origin)
}

/// Fine vertex ids (in [`fine_box`]) of the blow-up of coarse vertex `u`.
pub fn blowup_box_map(coarse: &BoxSpec, u: usize, r: usize) -> Result<Vec<usize>> {
    let n = coarse.vertex_count()?;
    if u >= n {
        return Err(Error::InvalidVertex { id: u, count: n });
    }
    let fine = fine_box(coarse, r)?;
    let ids = blowup_box_coords(&coarse.coords(u), r)?
        .iter()
        .map(|c| fine.index_of(c).expect("blow-up stays inside the fine box"))
        .collect();
    Ok(ids)
}

/// The coarse vertex whose blow-up contains fine vertex `f`.
pub fn coarse_of(coarse: &BoxSpec, f: usize, r: usize) -> Result<usize> {
    let fine = fine_box(coarse, r)?;
    let n = fine.vertex_count()?;
    if f >= n {
        return Err(Error::InvalidVertex { id: f, count: n });
    }
    let c: Vec<i64> = fine.coords(f).iter().map(|&x| x / r as i64).collect();
    Ok(coarse.index_of(&c).unwrap())
}

/// Parameters of a blow-up experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupSpec {
    pub r: usize,
    pub params_small: ModelParams,
    #[serde(default)]
    pub tau_prime: Option<f64>,
    #[serde(default = "one")]
    pub c_agg: f64,
}

fn one() -> f64 {
    1.0
}

impl BlowupSpec {
    pub fn lrp(r: usize, params_small: ModelParams) -> Self {
        BlowupSpec {
            r,
            params_small,
            tau_prime: None,
            c_agg: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::domain("blow-up factor must be >= 1"));
        }
        if !(self.c_agg > 0.0) || self.c_agg.is_infinite() {
            return Err(Error::domain("c_agg must be positive and finite"));
        }
        self.params_small.validate()
    }
}

/// Coarse graph with an edge `{U, V}` iff some fine edge joins their boxes.
/// Coarse vertices carry unit weights.
pub fn coarsen(fine: &SampledGraph, coarse_box: &BoxSpec, r: usize) -> Result<SampledGraph> {
    let n = coarse_box.vertex_count()?;
    let map: Vec<usize> = (0..fine.vertex_count())
        .map(|f| coarse_of(coarse_box, f, r))
        .collect::<Result<_>>()?;
    let edges: Vec<(usize, usize)> = fine
        .edges()
        .filter_map(|(a, b)| {
            let (u, v) = (map[a], map[b]);
            (u != v).then_some((u.min(v), u.max(v)))
        })
        .collect();
    let positions = (0..n).flat_map(|i| coarse_box.lattice_position(i)).collect();
    SampledGraph::from_parts(
        fine.model_tag,
        coarse_box.clone(),
        fine.params,
        fine.seed,
        vec![1.0; n],
        positions,
        edges,
    )
}

/// Coarse-lattice squared distance bins of non-adjacent pairs.
fn coarse_bins(coarse_box: &BoxSpec) -> Result<BTreeMap<u64, Vec<(usize, usize)>>> {
    let n = coarse_box.vertex_count()?;
    let mut bins: BTreeMap<u64, Vec<(usize, usize)>> = BTreeMap::new();
    let coords: Vec<Vec<i64>> = (0..n).map(|i| coarse_box.coords(i)).collect();
    for u in 0..n {
        for v in (u + 1)..n {
            let d2: i64 = coords[u].iter().zip(&coords[v]).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 > 1 {
                bins.entry(d2 as u64).or_default().push((u, v));
            }
        }
    }
    Ok(bins)
}

/// Per-distance coarse edge counts: `(dist, pairs, edges)`.
pub type BinCounts = Vec<(f64, u64, u64)>;

fn target_prob(lambda_b: f64, dist: f64, alpha_d: f64) -> f64 {
    (lambda_b * dist.powf(-alpha_d)).min(1.0)
}

fn bin_report(kind: CouplingKind, counts: &BinCounts, lambda_b: f64, alpha_d: f64, trials: usize) -> CouplingReport {
    let mut report = CouplingReport::new(kind, trials).param("lambda_b", lambda_b);
    for &(dist, pairs, edges) in counts {
        let target = target_prob(lambda_b, dist, alpha_d);
        let freq = edges as f64 / pairs as f64;
        let sigma = (target * (1.0 - target) / pairs as f64).sqrt();
        let violated = freq + 3.0 * sigma < target;
        report.violations += violated as usize;
        report.push(CheckRecord {
            input: vec![dist],
            lhs: freq,
            rhs: target,
            sigma,
            violated,
        });
    }
    report
}

/// Blow up LRP: sample the small-λ model on the fine box of `coarse_box` and
/// coarsen. The report compares per-distance coarse edge frequencies with
/// `min{1, λ_b dist^{-αd}}`.
pub fn blowup_lrp(
    coarse_box: &BoxSpec,
    spec: &BlowupSpec,
    lambda_b: f64,
    seed: u64,
) -> Result<(SampledGraph, SampledGraph, CouplingReport)> {
    blowup_lrp_with_budget(coarse_box, spec, lambda_b, seed, &Budget::default())
}

pub fn blowup_lrp_with_budget(
    coarse_box: &BoxSpec,
    spec: &BlowupSpec,
    lambda_b: f64,
    seed: u64,
    budget: &Budget,
) -> Result<(SampledGraph, SampledGraph, CouplingReport)> {
    spec.validate()?;
    if spec.params_small.tau.is_finite() {
        return Err(Error::domain("LRP blow-up needs params_small with tau = inf"));
    }
    let fine_b = fine_box(coarse_box, spec.r)?;
    let fine = Realization::new(&fine_b, &spec.params_small, ModelTag::Lrp, seed, budget)?.into_graph();
    let coarse = coarsen(&fine, coarse_box, spec.r)?;
    let counts = count_bins(&coarse, &coarse_bins(coarse_box)?);
    let report = bin_report(CouplingKind::BlowupLRP, &counts, lambda_b, spec.params_small.alpha_d(), 1)
        .param("r", spec.r)
        .param("params_small", params_json(&spec.params_small))
        .param("seed", seed);
    Ok((fine, coarse, report))
}

fn count_bins(coarse: &SampledGraph, bins: &BTreeMap<u64, Vec<(usize, usize)>>) -> BinCounts {
    bins.iter()
        .map(|(&d2, pairs)| {
            let edges = pairs.iter().filter(|&&(u, v)| coarse.has_edge(u, v)).count();
            ((d2 as f64).sqrt(), pairs.len() as u64, edges as u64)
        })
        .collect()
}

/// Coarse edge counts accumulated over `trials` blow-ups.
pub fn blowup_lrp_frequencies(
    coarse_box: &BoxSpec,
    spec: &BlowupSpec,
    lambda_b: f64,
    trials: usize,
    seed: u64,
    budget: &Budget,
) -> Result<(BinCounts, CouplingReport)> {
    spec.validate()?;
    let bins = coarse_bins(coarse_box)?;
    let per_trial: Vec<BinCounts> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let (_, coarse, _) = blowup_lrp_with_budget(coarse_box, spec, lambda_b, trial_seed(seed, i), budget)?;
            Ok(count_bins(&coarse, &bins))
        })
        .collect::<Result<_>>()?;
    let mut total: BinCounts = bins.keys().map(|&d2| ((d2 as f64).sqrt(), 0, 0)).collect();
    for counts in per_trial {
        for (acc, c) in total.iter_mut().zip(counts) {
            acc.1 += c.1;
            acc.2 += c.2;
        }
    }
    let report = bin_report(CouplingKind::BlowupLRP, &total, lambda_b, spec.params_small.alpha_d(), trials)
        .param("r", spec.r)
        .param("params_small", params_json(&spec.params_small))
        .param("seed", seed);
    Ok((total, report))
}

/// Maximum-likelihood λ of the model `Pr[edge at dist D] = 1 - exp(-λ D^{-αd})`
/// from binned counts, with its Fisher-information standard error.
pub fn fit_effective_lambda(counts: &[(f64, u64, u64)], alpha_d: f64) -> Result<(f64, f64)> {
    let rows: Vec<(f64, f64, f64)> = counts
        .iter()
        .filter(|r| r.1 > 0)
        .map(|&(d, n, k)| (d.powf(-alpha_d), n as f64, k as f64))
        .collect();
    if rows.iter().all(|r| r.2 == 0.0) {
        return Err(Error::domain("no edges observed, effective lambda is zero"));
    }
    if rows.iter().all(|r| r.2 == r.1) {
        return Err(Error::domain("every pair is an edge, effective lambda is unbounded"));
    }
    // Score is decreasing in λ.
    let score = |lam: f64| -> f64 {
        rows.iter()
            .map(|&(a, n, k)| {
                let q = (-lam * a).exp();
                k * a * q / (1.0 - q) - (n - k) * a
            })
            .sum()
    };
    let (mut lo, mut hi) = (1e-12, 1.0);
    while score(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lam = 0.5 * (lo + hi);
    let info: f64 = rows
        .iter()
        .map(|&(a, n, _)| {
            let q = (-lam * a).exp();
            n * a * a * q / (1.0 - q)
        })
        .sum();
    Ok((lam, info.sqrt().recip()))
}

/// `c (Σ w_i^α)^{1/α} / r^{d/2}` for the `n = r^d` weights of one box.
pub fn aggregate_weight(box_weights: &[f64], alpha: f64, r: usize, d: usize, c_agg: f64) -> Result<f64> {
    let n = r
        .checked_pow(d as u32)
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::domain("invalid blow-up size"))?;
    if box_weights.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: box_weights.len(),
        });
    }
    if !(alpha >= 1.0) || alpha.is_infinite() || !(c_agg > 0.0) {
        return Err(Error::domain("aggregate_weight needs alpha >= 1 and c_agg > 0"));
    }
    if let Some(w) = box_weights.iter().find(|w| !(**w >= 1.0)) {
        return Err(Error::domain(format!("weights must be >= 1, got {w}")));
    }
    let norm = box_weights.iter().map(|w| w.powf(alpha)).sum::<f64>().powf(alpha.recip());
    Ok(c_agg * norm / (r as f64).powf(d as f64 / 2.0))
}

/// The deterministic lower bound `c n^{1/α - 1/2}` of [`aggregate_weight`].
pub fn aggregate_floor(alpha: f64, n: usize, c_agg: f64) -> f64 {
    c_agg * (n as f64).powf(alpha.recip() - 0.5)
}

/// Number of points on the log-spaced grid of [`weight_dominance_test`].
pub const DOMINANCE_GRID_POINTS: usize = 41;

/// Compare the tail of aggregated Pareto(τ′) weights with the Pareto(τ)
/// tail `x^{1-τ}` on a log grid over `[1, 10^3 · floor]`. A grid point is
/// violated when `empirical + 3σ < target`.
#[allow(clippy::too_many_arguments)]
pub fn weight_dominance_test(
    tau: f64,
    tau_prime: f64,
    alpha: f64,
    r: usize,
    d: usize,
    c_agg: f64,
    trials: usize,
    seed: u64,
) -> Result<CouplingReport> {
    let max = tau_prime_max(tau, alpha)?;
    if !(tau_prime > 3.0 && tau_prime < max) {
        return Err(Error::domain(format!(
            "tau' must lie in (3, {max}) for tau = {tau}, alpha = {alpha}; got {tau_prime}"
        )));
    }
    if trials == 0 {
        return Err(Error::domain("trials must be >= 1"));
    }
    let n = r
        .checked_pow(d as u32)
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::domain("invalid blow-up size"))?;
    let mut samples: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let w = sample_weights(n, tau_prime, trial_seed(seed, i))?;
            aggregate_weight(&w, alpha, r, d, c_agg)
        })
        .collect::<Result<_>>()?;
    samples.sort_by(|a, b| a.total_cmp(b));
    let floor = aggregate_floor(alpha, n, c_agg);
    let grid = log_grid(1.0, 1e3 * floor.max(1.0), DOMINANCE_GRID_POINTS);
    let violations_at = |scale: f64| grid.iter().filter(|&&x| dominance_record(&samples, scale, x, tau).violated).count();
    let mut report = CouplingReport::new(CouplingKind::WeightDominance, trials)
        .param("tau", tau)
        .param("tau_prime", tau_prime)
        .param("alpha", alpha)
        .param("r", r)
        .param("d", d)
        .param("c_agg", c_agg)
        .param("floor", floor)
        .param("seed", seed);
    for &x in &grid {
        let rec = dominance_record(&samples, 1.0, x, tau);
        report.violations += rec.violated as usize;
        report.push(rec);
    }
    // Smallest multiple of c_agg under which no grid point is violated.
    let fitted = if violations_at(1.0) == 0 {
        let (mut lo, mut hi) = (1e-6f64, 1.0f64);
        if violations_at(lo) == 0 {
            lo
        } else {
            for _ in 0..60 {
                let mid = (lo * hi).sqrt();
                if violations_at(mid) == 0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        }
    } else {
        let (mut lo, mut hi) = (1.0f64, 2.0f64);
        while violations_at(hi) > 0 && hi < 1e12 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..60 {
            let mid = (lo * hi).sqrt();
            if violations_at(mid) == 0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    Ok(report.param("fitted_c_agg", fitted * c_agg))
}

fn dominance_record(sorted: &[f64], scale: f64, x: f64, tau: f64) -> CheckRecord {
    let n = sorted.len() as f64;
    let below = sorted.partition_point(|&w| w * scale < x);
    let emp = (sorted.len() - below) as f64 / n;
    let target = x.powf(1.0 - tau).min(1.0);
    let sigma = (target * (1.0 - target) / n).sqrt();
    CheckRecord {
        input: vec![x],
        lhs: emp,
        rhs: target,
        sigma,
        violated: emp + 3.0 * sigma < target,
    }
}

pub(crate) fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 || hi <= lo {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Blow up SFP with Pareto(τ′) fine weights. Conditioned on the weights,
/// each coarse bin's expected edge count under the lower bound
/// `1 - exp(-λ_b D^{-αd} W_u^α W_v^α)` is compared with the observed count.
pub fn blowup_sfp(
    coarse_box: &BoxSpec,
    spec: &BlowupSpec,
    tau: f64,
    lambda_b: f64,
    seed: u64,
    budget: &Budget,
) -> Result<(SampledGraph, SampledGraph, CouplingReport)> {
    spec.validate()?;
    let tau_prime = spec
        .tau_prime
        .ok_or_else(|| Error::domain("SFP blow-up needs tau_prime"))?;
    let max = tau_prime_max(tau, spec.params_small.alpha)?;
    if !(tau_prime > 3.0 && tau_prime < max) {
        return Err(Error::domain(format!("tau' must lie in (3, {max}), got {tau_prime}")));
    }
    let fine_params = ModelParams {
        tau: tau_prime,
        ..spec.params_small
    };
    let fine_b = fine_box(coarse_box, spec.r)?;
    let fine = Realization::new(&fine_b, &fine_params, ModelTag::Sfp, seed, budget)?.into_graph();
    let coarse = coarsen(&fine, coarse_box, spec.r)?;
    let d = coarse_box.d;
    let alpha = fine_params.alpha;
    let agg: Vec<f64> = (0..coarse.vertex_count())
        .map(|u| {
            let w: Vec<f64> = blowup_box_map(coarse_box, u, spec.r)?
                .into_iter()
                .map(|f| fine.weights[f])
                .collect();
            aggregate_weight(&w, alpha, spec.r, d, spec.c_agg)
        })
        .collect::<Result<_>>()?;
    let mut report = CouplingReport::new(CouplingKind::BlowupSFP, 1)
        .param("r", spec.r)
        .param("tau", tau)
        .param("tau_prime", tau_prime)
        .param("lambda_b", lambda_b)
        .param("c_agg", spec.c_agg)
        .param("seed", seed);
    for (&d2, pairs) in &coarse_bins(coarse_box)? {
        let dist = (d2 as f64).sqrt();
        let (mut expected, mut var, mut observed) = (0.0, 0.0, 0usize);
        for &(u, v) in pairs {
            let p = -(-lambda_b * dist.powf(-fine_params.alpha_d()) * (agg[u] * agg[v]).powf(alpha)).exp_m1();
            expected += p;
            var += p * (1.0 - p);
            observed += coarse.has_edge(u, v) as usize;
        }
        let sigma = var.sqrt();
        let violated = (observed as f64) + 3.0 * sigma < expected;
        report.violations += violated as usize;
        report.push(CheckRecord {
            input: vec![dist],
            lhs: observed as f64,
            rhs: expected,
            sigma,
            violated,
        });
    }
    Ok((fine, coarse, report))
}

/// Fine-path budget `3 d r k` for a coarse path of length `k`.
pub fn path_stitch_bound(r: u64, d: u64, k: u64) -> Result<u64> {
    if r == 0 || d == 0 || k == 0 {
        return Err(Error::domain("path_stitch_bound needs positive arguments"));
    }
    3u64.checked_mul(d)
        .and_then(|x| x.checked_mul(r))
        .and_then(|x| x.checked_mul(k))
        .ok_or_else(|| Error::domain("path_stitch_bound overflows"))
}

fn bfs_path(g: &SampledGraph, x: usize, y: usize) -> Option<Vec<usize>> {
    let mut parent = vec![usize::MAX; g.vertex_count()];
    parent[x] = x;
    let mut queue = VecDeque::from([x]);
    while let Some(u) = queue.pop_front() {
        if u == y {
            let mut path = vec![y];
            while *path.last().unwrap() != x {
                path.push(parent[*path.last().unwrap()]);
            }
            path.reverse();
            return Some(path);
        }
        for &v in g.neighbors(u) {
            let v = v as usize;
            if parent[v] == usize::MAX {
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    None
}

/// Grid walk inside one fine box, correcting one coordinate at a time.
fn box_walk(fine_box: &BoxSpec, from: usize, to: usize) -> Vec<usize> {
    let mut cur = fine_box.coords(from);
    let target = fine_box.coords(to);
    let mut walk = vec![from];
    for j in 0..cur.len() {
        while cur[j] != target[j] {
            cur[j] += (target[j] - cur[j]).signum();
            walk.push(fine_box.index_of(&cur).unwrap());
        }
    }
    walk
}

/// Build a fine path following the coarse path `coarse_path`: each coarse
/// edge is replaced by a witnessing fine edge, joined by grid walks inside
/// the boxes. `None` when some coarse edge has no fine witness.
pub fn stitch_path(
    fine: &SampledGraph,
    coarse_box: &BoxSpec,
    r: usize,
    coarse_path: &[usize],
    start: usize,
    end: usize,
) -> Result<Option<Vec<usize>>> {
    let fine_b = fine_box(coarse_box, r)?;
    if coarse_path.is_empty() {
        return Err(Error::domain("coarse path is empty"));
    }
    if coarse_of(coarse_box, start, r)? != coarse_path[0] || coarse_of(coarse_box, end, r)? != *coarse_path.last().unwrap() {
        return Err(Error::domain("path endpoints lie outside the end boxes"));
    }
    let mut path = vec![start];
    for hop in coarse_path.windows(2) {
        let (bu, bv) = (blowup_box_map(coarse_box, hop[0], r)?, blowup_box_map(coarse_box, hop[1], r)?);
        let witness = bu
            .iter()
            .find_map(|&a| bv.iter().find(|&&b| fine.has_edge(a, b)).map(|&b| (a, b)));
        let Some((a, b)) = witness else { return Ok(None) };
        path.extend(box_walk(&fine_b, *path.last().unwrap(), a).into_iter().skip(1));
        path.push(b);
    }
    path.extend(box_walk(&fine_b, *path.last().unwrap(), end).into_iter().skip(1));
    Ok(Some(path))
}

/// The pair of fine points of two boxes at maximal Euclidean distance.
pub fn farthest_pair(coarse_box: &BoxSpec, u: usize, v: usize, r: usize) -> Result<(usize, usize)> {
    let fine_b = fine_box(coarse_box, r)?;
    let (cu, cv) = (coarse_box.coords(u), coarse_box.coords(v));
    let hi = r as i64 - 1;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for j in 0..coarse_box.d {
        let (lo_u, lo_v) = (cu[j] * r as i64, cv[j] * r as i64);
        if cu[j] <= cv[j] {
            a.push(lo_u);
            b.push(lo_v + hi);
        } else {
            a.push(lo_u + hi);
            b.push(lo_v);
        }
    }
    Ok((fine_b.index_of(&a).unwrap(), fine_b.index_of(&b).unwrap()))
}

/// For every coarse pair in `pairs`, stitch a fine path between the farthest
/// points of the end boxes and compare its length with `3 d r k`.
pub fn stitching_check(
    fine: &SampledGraph,
    coarse: &SampledGraph,
    coarse_box: &BoxSpec,
    r: usize,
    pairs: &[(usize, usize)],
) -> Result<CouplingReport> {
    let d = coarse_box.d as u64;
    let mut report = CouplingReport::new(CouplingKind::Stitching, pairs.len()).param("r", r);
    for &(u, v) in pairs {
        if u == v {
            continue;
        }
        let Some(cpath) = bfs_path(coarse, u, v) else { continue };
        let k = (cpath.len() - 1) as u64;
        let (a, b) = farthest_pair(coarse_box, u, v, r)?;
        let fine_path = stitch_path(fine, coarse_box, r, &cpath, a, b)?;
        let bound = path_stitch_bound(r as u64, d, k)? as f64;
        let (len, ok) = match &fine_path {
            Some(p) => ((p.len() - 1) as f64, p.windows(2).all(|w| fine.has_edge(w[0], w[1]))),
            None => (f64::INFINITY, false),
        };
        let violated = !ok || len > bound;
        report.violations += violated as usize;
        report.push(CheckRecord {
            input: vec![u as f64, v as f64, k as f64],
            lhs: len,
            rhs: bound,
            sigma: 0.0,
            violated,
        });
    }
    Ok(report)
}

/// Pareto(τ) samples of `n` weights on the aux stream, for property tests.
pub fn random_weight_vector(n: usize, tau: f64, seed: u64) -> Vec<f64> {
    (0..n)
        .map(|i| pareto_quantile_unchecked(uniform(seed, Stream::Aux, &[i as u64]), tau))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_exp_examples() {
        let (l, r) = min_exp_inequality(0.5, 1.0).unwrap();
        assert!((l - 0.31606).abs() < 1e-5 && (r - 0.39347).abs() < 1e-5);
        assert_eq!(min_exp_inequality(0.0, 3.0).unwrap(), (0.0, 0.0));
        assert_eq!(min_exp_inequality(2.0, 0.0).unwrap(), (0.0, 0.0));
        assert!(min_exp_inequality(-1.0, 0.0).is_err());
    }

    #[test]
    fn stitch_bound_examples() {
        assert_eq!(path_stitch_bound(3, 2, 5).unwrap(), 90);
        assert_eq!(path_stitch_bound(1, 1, 1).unwrap(), 3);
        assert!(path_stitch_bound(0, 1, 1).is_err());
    }

    #[test]
    fn box_map_tiles() {
        let coarse = BoxSpec::new(2, 4).unwrap();
        let mut seen = vec![false; 64];
        for u in 0..16 {
            let b = blowup_box_map(&coarse, u, 2).unwrap();
            assert_eq!(b.len(), 4);
            for f in b {
                assert!(!seen[f]);
                seen[f] = true;
                assert_eq!(coarse_of(&coarse, f, 2).unwrap(), u);
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(blowup_box_coords(&[1, 1], 3).unwrap().len(), 9);
        assert_eq!(blowup_box_coords(&[5, 2], 1).unwrap(), vec![vec![5, 2]]);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_weight(&[1.0; 16], 1.0, 4, 2, 1.0).unwrap(), 4.0);
        assert!((aggregate_weight(&[7.5], 1.3, 1, 2, 2.0).unwrap() - 15.0).abs() < 1e-12);
        assert!(aggregate_weight(&[1.0; 3], 1.0, 2, 1, 1.0).is_err());
        assert!((aggregate_floor(1.0, 16, 1.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_coupling_contract() {
        let b = BoxSpec::new(1, 32).unwrap();
        let p = ModelParams::new(1, 1.8, 4.0, 0.3).unwrap();
        assert!(couple_alpha(&b, &p, 1.8, ModelTag::Sfp, 0).is_err());
        assert!(couple_alpha(&b, &p, 1.0, ModelTag::Sfp, 0).is_err());
        let (g, gp, rep) = couple_alpha(&b, &p, 1.5, ModelTag::Sfp, 0).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(g.is_subgraph_of(&gp));
        let unit = ModelParams { lambda: 1.0, ..p };
        let (g, gp, _) = couple_alpha(&b, &unit, 1.5, ModelTag::Lrp, 4).unwrap();
        assert!(g.is_subgraph_of(&gp));
    }

    #[test]
    fn identity_blowup_preserves_graph() {
        let coarse = BoxSpec::new(1, 40).unwrap();
        let spec = BlowupSpec::lrp(1, ModelParams::lrp(1, 1.5, 0.4).unwrap());
        let (fine, coarse_g, _) = blowup_lrp(&coarse, &spec, 0.4, 9).unwrap();
        assert_eq!(fine.edges().collect::<Vec<_>>(), coarse_g.edges().collect::<Vec<_>>());
    }

    #[test]
    fn zero_lambda_blowup_has_only_grid_edges() {
        let coarse = BoxSpec::new(2, 5).unwrap();
        let spec = BlowupSpec::lrp(3, ModelParams::lrp(2, 1.5, 0.0).unwrap());
        let (_, g, rep) = blowup_lrp(&coarse, &spec, 0.0, 2).unwrap();
        assert_eq!(g.edge_count(), 2 * 5 * 4);
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn stitched_paths_respect_budget() {
        let coarse = BoxSpec::new(2, 6).unwrap();
        let spec = BlowupSpec::lrp(3, ModelParams::lrp(2, 1.5, 0.2).unwrap());
        let (fine, g, _) = blowup_lrp(&coarse, &spec, 0.1, 13).unwrap();
        let pairs: Vec<_> = (0..36).map(|v| (0, v)).collect();
        let rep = stitching_check(&fine, &g, &coarse, 3, &pairs).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.details.len() >= 30);
    }

    #[test]
    fn lambda_fit_recovers_truth() {
        // expected counts generated from a known λ give it back
        let lam = 0.37;
        let counts: Vec<(f64, u64, u64)> = (2..30)
            .map(|d| {
                let p = 1.0 - (-lam * (d as f64).powf(-1.5)).exp();
                (d as f64, 1_000_000, (p * 1e6).round() as u64)
            })
            .collect();
        let (fit, sd) = fit_effective_lambda(&counts, 1.5).unwrap();
        assert!((fit - lam).abs() < 1e-3, "fit {fit}");
        assert!(sd > 0.0 && sd < 0.01);
    }

    #[test]
    fn tau_prime_precondition() {
        assert!(weight_dominance_test(4.0, 3.4, 1.0, 2, 1, 1.0, 50, 1).is_ok());
        assert!(weight_dominance_test(4.0, 3.6, 1.0, 2, 1, 1.0, 50, 1).is_err());
        assert!(weight_dominance_test(4.0, 2.9, 1.0, 2, 1, 1.0, 50, 1).is_err());
    }

    #[test]
    fn floor_region_never_violates() {
        let rep = weight_dominance_test(4.0, 3.4, 1.0, 16, 1, 1.0, 400, 5).unwrap();
        let floor = rep.parameters["floor"].as_f64().unwrap();
        for rec in rep.details.iter().filter(|r| r.input[0] <= floor) {
            assert_eq!(rec.lhs, 1.0);
            assert!(!rec.violated);
        }
    }

    #[test]
    fn report_serializes() {
        let rep = fpp_cffp_edge_check(1.0, 1.0, 2.0, 1.0, &ModelParams::new(1, 1.0, 4.0, 1.0).unwrap(), 1000, 3).unwrap();
        let v: Value = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(v["kind"], "FppCffp");
        assert_eq!(v["details"][0]["input"][2], 2.0);
    }
}
