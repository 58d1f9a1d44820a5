//! Finite-box realizations of LRP, SFP and GIRG, and edge-cost maps for FPP
//! and CFFP.
//!
//! Randomness is drawn from the counter-based streams in [`stream`]: a pair
//! `{u, v}` is an edge iff its shared uniform falls below the connection
//! probability, so two models sampled under one seed are coupled pointwise.

pub mod stream;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{clamp_kernel, pareto_quantile_unchecked, ModelParams};
pub use stream::{cost_seed, edge_uniform, trial_seed, vertex_uniform};
use stream::{edge_uniform_unchecked, position_uniform};

/// Environment variable overriding [`Budget::default`]; either `N` (both
/// limits) or `N/M` (sparse / complete-graph).
pub const BUDGET_ENV: &str = "PERCOLATE_BUDGET_VERTICES";

/// Vertex-count limits for materialized instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Limit for sparse models (LRP, SFP, GIRG).
    pub sparse_vertices: usize,
    /// Limit for complete-graph cost models (CFFP), whose pair count is quadratic.
    pub complete_vertices: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            sparse_vertices: 200_000,
            complete_vertices: 4_000,
        }
    }
}

impl Budget {
    /// Read [`BUDGET_ENV`], falling back to the defaults when unset.
    pub fn from_env() -> Result<Self> {
        match std::env::var(BUDGET_ENV) {
            Ok(raw) => Self::parse(&raw),
            Err(_) => Ok(Self::default()),
        }
    }

    pub fn parse(raw: &str) -> Result<Self> {
        let bad = || Error::domain(format!("{BUDGET_ENV} must be N or N/M, got {raw:?}"));
        let mut parts = raw.trim().split('/');
        let sparse: usize = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let complete = match parts.next() {
            Some(m) => m.trim().parse().map_err(|_| bad())?,
            None => sparse,
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(Budget {
            sparse_vertices: sparse,
            complete_vertices: complete,
        })
    }

    pub(crate) fn check_sparse(&self, n: usize) -> Result<()> {
        if n > self.sparse_vertices {
            return Err(Error::Budget {
                what: "sparse model vertices",
                required: n as u128,
                limit: self.sparse_vertices as u128,
            });
        }
        Ok(())
    }

    pub(crate) fn check_complete(&self, n: usize) -> Result<()> {
        if n > self.complete_vertices {
            return Err(Error::Budget {
                what: "complete-graph vertices",
                required: n as u128,
                limit: self.complete_vertices as u128,
            });
        }
        Ok(())
    }
}

/// A finite window `origin + {0, .., side-1}^d` of the integer lattice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub d: usize,
    pub side: usize,
    #[serde(default)]
    pub origin: Vec<i64>,
}

impl BoxSpec {
    pub fn new(d: usize, side: usize) -> Result<Self> {
        let b = BoxSpec {
            d,
            side,
            origin: vec![0; d],
        };
        b.vertex_count()?;
        Ok(b)
    }

    pub fn with_origin(mut self, origin: Vec<i64>) -> Result<Self> {
        if origin.len() != self.d {
            return Err(Error::LengthMismatch {
                expected: self.d,
                got: origin.len(),
            });
        }
        self.origin = origin;
        Ok(self)
    }

    /// `side^d`, or an error when the box is empty or overflows `usize`.
    pub fn vertex_count(&self) -> Result<usize> {
        if self.d == 0 || self.side == 0 {
            return Err(Error::domain("box needs d >= 1 and side >= 1"));
        }
        if !self.origin.is_empty() && self.origin.len() != self.d {
            return Err(Error::LengthMismatch {
                expected: self.d,
                got: self.origin.len(),
            });
        }
        u32::try_from(self.d)
            .ok()
            .and_then(|d| self.side.checked_pow(d))
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or(Error::Budget {
                what: "addressable vertices",
                required: (self.side as u128).saturating_pow(self.d.min(64) as u32),
                limit: u32::MAX as u128,
            })
    }

    /// Lattice coordinates (relative to the origin) of vertex `i`; the first
    /// coordinate varies fastest.
    pub fn coords(&self, mut i: usize) -> Vec<i64> {
        let mut c = Vec::with_capacity(self.d);
        for _ in 0..self.d {
            c.push((i % self.side) as i64);
            i /= self.side;
        }
        c
    }

    pub fn index_of(&self, coords: &[i64]) -> Option<usize> {
        if coords.len() != self.d {
            return None;
        }
        let mut idx = 0usize;
        for &c in coords.iter().rev() {
            if c < 0 || c as usize >= self.side {
                return None;
            }
            idx = idx * self.side + c as usize;
        }
        Some(idx)
    }

    fn origin_at(&self, j: usize) -> i64 {
        self.origin.get(j).copied().unwrap_or(0)
    }

    /// Absolute lattice position of vertex `i`.
    pub fn lattice_position(&self, i: usize) -> Vec<f64> {
        self.coords(i)
            .into_iter()
            .enumerate()
            .map(|(j, c)| (c + self.origin_at(j)) as f64)
            .collect()
    }

    /// The vertex at coordinates `side / 2` in every direction.
    pub fn center(&self) -> usize {
        self.index_of(&vec![(self.side / 2) as i64; self.d]).unwrap()
    }

    /// Lattice distance from vertex `i` to the nearest face of the box.
    pub fn boundary_distance(&self, i: usize) -> usize {
        self.coords(i)
            .into_iter()
            .map(|c| (c as usize).min(self.side - 1 - c as usize))
            .min()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelTag {
    Lrp,
    Sfp,
    Girg,
}

impl ModelTag {
    pub fn has_grid_edges(self) -> bool {
        !matches!(self, ModelTag::Girg)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Lrp => "lrp",
            ModelTag::Sfp => "sfp",
            ModelTag::Girg => "girg",
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lrp" => Ok(ModelTag::Lrp),
            "sfp" => Ok(ModelTag::Sfp),
            "girg" => Ok(ModelTag::Girg),
            other => Err(Error::domain(format!("unknown model {other:?}"))),
        }
    }
}

/// Powerlaw weights `w_i = pareto_quantile(vertex_uniform(seed, i), tau)`.
pub fn sample_weights(n: usize, tau: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("sample_weights needs n >= 1"));
    }
    if !(tau > 1.0) {
        return Err(Error::domain(format!("sample_weights needs tau > 1, got {tau}")));
    }
    Ok((0..n)
        .map(|i| pareto_quantile_unchecked(vertex_uniform(seed, i), tau))
        .collect())
}

/// The vertex-level part of one realization (positions and weights) together
/// with the seed that decides every edge. Edge membership is evaluated on
/// demand, so this doubles as a lazily explored graph.
#[derive(Debug, Clone)]
pub struct Realization {
    pub model_tag: ModelTag,
    pub box_spec: BoxSpec,
    pub params: ModelParams,
    pub seed: u64,
    pub weights: Vec<f64>,
    positions: Vec<f64>,
    weight_pow: Vec<f64>,
    /// Kernel by integer squared distance, for unit-weight lattice models.
    kernel_table: Option<Vec<f64>>,
}

const KERNEL_TABLE_MAX: usize = 1 << 22;

impl Realization {
    pub fn new(box_spec: &BoxSpec, params: &ModelParams, model_tag: ModelTag, seed: u64, budget: &Budget) -> Result<Self> {
        params.validate()?;
        if box_spec.d != params.d {
            return Err(Error::domain(format!(
                "box dimension {} does not match model dimension {}",
                box_spec.d, params.d
            )));
        }
        let n = box_spec.vertex_count()?;
        budget.check_sparse(n)?;
        let weights = match model_tag {
            ModelTag::Lrp => vec![1.0; n],
            ModelTag::Sfp | ModelTag::Girg => sample_weights(n, params.tau, seed)?,
        };
        let d = box_spec.d;
        let mut positions = Vec::with_capacity(n * d);
        match model_tag {
            ModelTag::Lrp | ModelTag::Sfp => {
                for i in 0..n {
                    positions.extend(box_spec.lattice_position(i));
                }
            }
            ModelTag::Girg => {
                let side = box_spec.side as f64;
                for i in 0..n {
                    for j in 0..d {
                        positions.push(box_spec.origin_at(j) as f64 + side * position_uniform(seed, i, j));
                    }
                }
            }
        }
        Ok(Self::from_vertex_data(model_tag, box_spec.clone(), *params, seed, weights, positions))
    }

    pub(crate) fn from_vertex_data(
        model_tag: ModelTag,
        box_spec: BoxSpec,
        params: ModelParams,
        seed: u64,
        weights: Vec<f64>,
        positions: Vec<f64>,
    ) -> Self {
        let weight_pow = weights.iter().map(|w| w.powf(params.alpha)).collect();
        let mut r = Realization {
            model_tag,
            box_spec,
            params,
            seed,
            weights,
            positions,
            weight_pow,
            kernel_table: None,
        };
        let span = r.box_spec.side.saturating_sub(1);
        let max_d2 = span.saturating_mul(span).saturating_mul(r.box_spec.d);
        if model_tag == ModelTag::Lrp && r.weights.iter().all(|&w| w == 1.0) && max_d2 < KERNEL_TABLE_MAX {
            let table = (0..=max_d2).map(|d2| r.kernel_formula(0, 0, d2 as f64)).collect();
            r.kernel_table = Some(table);
        }
        r
    }

    pub fn vertex_count(&self) -> usize {
        self.weights.len()
    }

    pub fn position(&self, u: usize) -> &[f64] {
        let d = self.box_spec.d;
        &self.positions[u * d..(u + 1) * d]
    }

    pub fn dist(&self, u: usize, v: usize) -> f64 {
        squared_distance(self.position(u), self.position(v)).sqrt()
    }

    /// Lattice neighbours (one coordinate differing by one) in grid models.
    pub fn is_grid_pair(&self, u: usize, v: usize) -> bool {
        self.model_tag.has_grid_edges() && squared_distance(self.position(u), self.position(v)) == 1.0
    }

    /// Long-range connection probability of the pair.
    pub fn edge_probability(&self, u: usize, v: usize) -> f64 {
        let d2 = squared_distance(self.position(u), self.position(v));
        self.kernel_at(u, v, d2)
    }

    #[inline]
    fn kernel_at(&self, u: usize, v: usize, d2: f64) -> f64 {
        match &self.kernel_table {
            Some(t) => t[d2 as usize],
            None => self.kernel_formula(u, v, d2),
        }
    }

    fn kernel_formula(&self, u: usize, v: usize, d2: f64) -> f64 {
        if d2 == 0.0 {
            return 1.0;
        }
        let x = self.params.lambda * self.weight_pow[u] * self.weight_pow[v] * d2.powf(-0.5 * self.params.alpha_d());
        clamp_kernel(x, self.params.kernel)
    }

    /// Whether `{u, v}` is an edge of this realization.
    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        if u == v {
            return false;
        }
        let d2 = squared_distance(self.position(u), self.position(v));
        if d2 == 1.0 && self.model_tag.has_grid_edges() {
            return true;
        }
        edge_uniform_unchecked(self.seed, u, v) < self.kernel_at(u, v, d2)
    }

    /// All neighbours of `u`, found by scanning every other vertex.
    pub fn neighbors(&self, u: usize) -> Vec<usize> {
        (0..self.vertex_count()).filter(|&v| self.has_edge(u, v)).collect()
    }

    pub fn into_graph(self) -> SampledGraph {
        let n = self.vertex_count();
        let upper: Vec<Vec<u32>> = (0..n)
            .into_par_iter()
            .map(|u| ((u + 1)..n).filter(|&v| self.has_edge(u, v)).map(|v| v as u32).collect())
            .collect();
        let edges = upper
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| vs.iter().map(move |&v| (u, v as usize)));
        let (offsets, targets) = build_csr(n, edges);
        SampledGraph {
            model_tag: self.model_tag,
            box_spec: self.box_spec,
            params: self.params,
            seed: self.seed,
            weights: self.weights,
            positions: self.positions,
            offsets,
            targets,
        }
    }
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// CSR adjacency from an edge list of distinct unordered pairs.
fn build_csr(n: usize, edges: impl Iterator<Item = (usize, usize)> + Clone) -> (Vec<usize>, Vec<u32>) {
    let mut degree = vec![0usize; n];
    for (u, v) in edges.clone() {
        degree[u] += 1;
        degree[v] += 1;
    }
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for deg in &degree {
        offsets.push(offsets.last().unwrap() + deg);
    }
    let mut fill = offsets[..n].to_vec();
    let mut targets = vec![0u32; offsets[n]];
    for (u, v) in edges {
        targets[fill[u]] = v as u32;
        fill[u] += 1;
        targets[fill[v]] = u as u32;
        fill[v] += 1;
    }
    for u in 0..n {
        targets[offsets[u]..offsets[u + 1]].sort_unstable();
    }
    (offsets, targets)
}

/// An immutable, materialized realization with symmetric adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGraph {
    pub model_tag: ModelTag,
    pub box_spec: BoxSpec,
    pub params: ModelParams,
    pub seed: u64,
    pub weights: Vec<f64>,
    positions: Vec<f64>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl SampledGraph {
    /// Assemble a graph from explicit parts. Self-loops and out-of-range
    /// endpoints are rejected; duplicate pairs are merged.
    pub fn from_parts(
        model_tag: ModelTag,
        box_spec: BoxSpec,
        params: ModelParams,
        seed: u64,
        weights: Vec<f64>,
        positions: Vec<f64>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let n = weights.len();
        if positions.len() != n * box_spec.d {
            return Err(Error::LengthMismatch {
                expected: n * box_spec.d,
                got: positions.len(),
            });
        }
        let mut pairs = Vec::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::domain(format!("self-loop at vertex {u}")));
            }
            for id in [u, v] {
                if id >= n {
                    return Err(Error::InvalidVertex { id, count: n });
                }
            }
            pairs.push((u.min(v), u.max(v)));
        }
        pairs.sort_unstable();
        pairs.dedup();
        let (offsets, targets) = build_csr(n, pairs.iter().copied());
        Ok(SampledGraph {
            model_tag,
            box_spec,
            params,
            seed,
            weights,
            positions,
            offsets,
            targets,
        })
    }

    /// A weightless graph on the lattice vertices of `box_spec` with exactly
    /// the given edges.
    pub fn from_edges(box_spec: &BoxSpec, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let n = box_spec.vertex_count()?;
        let positions = (0..n).flat_map(|i| box_spec.lattice_position(i)).collect();
        let params = ModelParams::lrp(box_spec.d, 1.5, 0.0)?;
        Self::from_parts(ModelTag::Lrp, box_spec.clone(), params, 0, vec![1.0; n], positions, edges)
    }

    /// Copy of the graph with additional edges.
    pub fn with_extra_edges(&self, extra: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let edges: Vec<_> = self.edges().chain(extra).collect();
        Self::from_parts(
            self.model_tag,
            self.box_spec.clone(),
            self.params,
            self.seed,
            self.weights.clone(),
            self.positions.clone(),
            edges,
        )
    }

    pub fn vertex_count(&self) -> usize {
        self.weights.len()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn neighbors(&self, u: usize) -> &[u32] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.vertex_count() && self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in increasing order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.vertex_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| (v as usize) > u)
                .map(move |&v| (u, v as usize))
        })
    }

    pub fn position(&self, u: usize) -> &[f64] {
        let d = self.box_spec.d;
        &self.positions[u * d..(u + 1) * d]
    }

    pub fn positions_flat(&self) -> &[f64] {
        &self.positions
    }

    pub fn dist(&self, u: usize, v: usize) -> f64 {
        squared_distance(self.position(u), self.position(v)).sqrt()
    }


    /// Whether the edge set is a subset of `other`'s.
    pub fn is_subgraph_of(&self, other: &SampledGraph) -> bool {
        self.vertex_count() == other.vertex_count() && self.edges().all(|(u, v)| other.has_edge(u, v))
    }
}

/// Sample a realization with the default [`Budget`].
pub fn sample_graph(box_spec: &BoxSpec, params: &ModelParams, model_tag: ModelTag, seed: u64) -> Result<SampledGraph> {
    sample_graph_with_budget(box_spec, params, model_tag, seed, &Budget::default())
}

/// Exact all-pairs sampling: every non-grid pair is tested against its kernel.
pub fn sample_graph_with_budget(
    box_spec: &BoxSpec,
    params: &ModelParams,
    model_tag: ModelTag,
    seed: u64,
    budget: &Budget,
) -> Result<SampledGraph> {
    Ok(Realization::new(box_spec, params, model_tag, seed, budget)?.into_graph())
}

/// How the costs of a [`CostMap`] were generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateModel {
    /// Exp(1) on the edges of an underlying graph.
    UnitRate,
    /// Exp((w_u w_v)^α |u-v|^{-αd}) on every pair of the box.
    CffpRate,
}

#[derive(Debug, Clone, PartialEq)]
enum CostStorage {
    /// Symmetric CSR: both orientations of every pair, sorted per row.
    Sparse {
        offsets: Vec<usize>,
        targets: Vec<u32>,
        costs: Vec<f64>,
    },
    /// Upper triangle of the complete graph, `v(v-1)/2 + u` for `u < v`.
    Dense(Vec<f64>),
}

/// Nonnegative costs keyed by unordered vertex pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    pub rate_model: RateModel,
    vertex_count: usize,
    storage: CostStorage,
}

#[inline]
fn tri_index(u: usize, v: usize) -> usize {
    let (a, b) = if u < v { (u, v) } else { (v, u) };
    b * (b - 1) / 2 + a
}

fn sparse_storage(n: usize, pairs: &[((usize, usize), f64)]) -> CostStorage {
    let mut degree = vec![0usize; n];
    for &((u, v), _) in pairs {
        degree[u] += 1;
        degree[v] += 1;
    }
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    for deg in &degree {
        offsets.push(offsets.last().unwrap() + deg);
    }
    let mut rows: Vec<Vec<(u32, f64)>> = degree.iter().map(|&d| Vec::with_capacity(d)).collect();
    for &((u, v), c) in pairs {
        rows[u].push((v as u32, c));
        rows[v].push((u as u32, c));
    }
    let mut targets = Vec::with_capacity(offsets[n]);
    let mut costs = Vec::with_capacity(offsets[n]);
    for mut row in rows {
        row.sort_unstable_by_key(|e| e.0);
        for (t, c) in row {
            targets.push(t);
            costs.push(c);
        }
    }
    CostStorage::Sparse { offsets, targets, costs }
}

impl CostMap {
    /// Costs on an explicit set of pairs. Negative or non-finite costs, self
    /// pairs and out-of-range ids are rejected; a repeated pair keeps its
    /// last cost.
    pub fn from_pairs(
        rate_model: RateModel,
        vertex_count: usize,
        pairs: impl IntoIterator<Item = ((usize, usize), f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for ((u, v), c) in pairs {
            if u == v {
                return Err(Error::domain(format!("cost on self pair {u}")));
            }
            for id in [u, v] {
                if id >= vertex_count {
                    return Err(Error::InvalidVertex { id, count: vertex_count });
                }
            }
            if !(c >= 0.0) || c.is_infinite() {
                return Err(Error::domain(format!("cost must be finite and nonnegative, got {c}")));
            }
            map.insert((u.min(v), u.max(v)), c);
        }
        let pairs: Vec<_> = map.into_iter().collect();
        Ok(CostMap {
            rate_model,
            vertex_count,
            storage: sparse_storage(vertex_count, &pairs),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        if u == v || u >= self.vertex_count || v >= self.vertex_count {
            return None;
        }
        match &self.storage {
            CostStorage::Sparse { offsets, targets, costs } => {
                let row = offsets[u]..offsets[u + 1];
                targets[row.clone()]
                    .binary_search(&(v as u32))
                    .ok()
                    .map(|i| costs[row.start + i])
            }
            CostStorage::Dense(c) => Some(c[tri_index(u, v)]),
        }
    }

    /// Copy with the cost of an existing pair replaced.
    pub fn with_cost(&self, u: usize, v: usize, cost: f64) -> Result<Self> {
        if self.get(u, v).is_none() {
            return Err(Error::domain(format!("pair ({u}, {v}) carries no cost")));
        }
        if !(cost >= 0.0) || cost.is_infinite() {
            return Err(Error::domain(format!("cost must be finite and nonnegative, got {cost}")));
        }
        let mut out = self.clone();
        match &mut out.storage {
            CostStorage::Sparse { offsets, targets, costs } => {
                for (a, b) in [(u, v), (v, u)] {
                    let i = targets[offsets[a]..offsets[a + 1]].binary_search(&(b as u32)).unwrap();
                    costs[offsets[a] + i] = cost;
                }
            }
            CostStorage::Dense(c) => c[tri_index(u, v)] = cost,
        }
        Ok(out)
    }

    /// Neighbours of `u` and the costs towards them.
    pub fn for_each_cost(&self, u: usize, mut f: impl FnMut(usize, f64)) {
        match &self.storage {
            CostStorage::Sparse { offsets, targets, costs } => {
                for i in offsets[u]..offsets[u + 1] {
                    f(targets[i] as usize, costs[i]);
                }
            }
            CostStorage::Dense(c) => {
                for v in (0..self.vertex_count).filter(|&v| v != u) {
                    f(v, c[tri_index(u, v)]);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        match &self.storage {
            CostStorage::Sparse { targets, .. } => targets.len() / 2,
            CostStorage::Dense(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether every pair of the vertex set carries a cost.
    pub fn is_complete(&self) -> bool {
        matches!(self.storage, CostStorage::Dense(_))
    }

    /// `((u, v), cost)` with `u < v`, ordered by `(u, v)`.
    pub fn iter(&self) -> Box<dyn Iterator<Item = ((usize, usize), f64)> + '_> {
        match &self.storage {
            CostStorage::Sparse { offsets, targets, costs } => Box::new((0..self.vertex_count).flat_map(move |u| {
                (offsets[u]..offsets[u + 1])
                    .filter(move |&i| targets[i] as usize > u)
                    .map(move |i| ((u, targets[i] as usize), costs[i]))
            })),
            CostStorage::Dense(c) => {
                let n = self.vertex_count;
                Box::new((0..n).flat_map(move |u| ((u + 1)..n).map(move |v| ((u, v), c[tri_index(u, v)]))))
            }
        }
    }
}

#[inline]
pub(crate) fn exp_from_uniform(u: f64, rate: f64) -> f64 {
    -(-u).ln_1p() / rate
}

/// The Exp(1) cost that [`sample_fpp_costs`] assigns to `{u, v}` under `seed`.
#[inline]
pub fn fpp_edge_cost(seed: u64, u: usize, v: usize) -> f64 {
    exp_from_uniform(edge_uniform_unchecked(cost_seed(seed), u, v), 1.0)
}

/// Exp(1) costs on every edge of `graph`, drawn from the cost stream of `seed`.
pub fn sample_fpp_costs(graph: &SampledGraph, seed: u64) -> CostMap {
    let cs = cost_seed(seed);
    let pairs: Vec<_> = graph
        .edges()
        .map(|(u, v)| ((u, v), exp_from_uniform(edge_uniform_unchecked(cs, u, v), 1.0)))
        .collect();
    CostMap {
        rate_model: RateModel::UnitRate,
        vertex_count: graph.vertex_count(),
        storage: sparse_storage(graph.vertex_count(), &pairs),
    }
}

/// Weighted complete-graph costs, evaluated lazily from the pair uniforms.
#[derive(Debug, Clone)]
pub struct CffpField {
    pub box_spec: BoxSpec,
    pub params: ModelParams,
    pub seed: u64,
    pub weights: Vec<f64>,
    positions: Vec<f64>,
    weight_pow: Vec<f64>,
}

impl CffpField {
    /// `weights` must have one entry per box vertex; `params.lambda` must be 1.
    pub fn new(box_spec: &BoxSpec, weights: Vec<f64>, params: &ModelParams, seed: u64, budget: &Budget) -> Result<Self> {
        params.validate()?;
        if params.lambda != 1.0 {
            return Err(Error::domain(format!("CFFP uses lambda = 1, got {}", params.lambda)));
        }
        if box_spec.d != params.d {
            return Err(Error::domain("box dimension does not match model dimension"));
        }
        let n = box_spec.vertex_count()?;
        budget.check_complete(n)?;
        if weights.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 1.0)) {
            return Err(Error::domain(format!("weights must be >= 1, got {w}")));
        }
        let positions = (0..n).flat_map(|i| box_spec.lattice_position(i)).collect();
        let weight_pow = weights.iter().map(|w| w.powf(params.alpha)).collect();
        Ok(CffpField {
            box_spec: box_spec.clone(),
            params: *params,
            seed,
            weights,
            positions,
            weight_pow,
        })
    }

    /// Field with Pareto(τ) weights drawn from the vertex stream of `seed`.
    pub fn sample(box_spec: &BoxSpec, params: &ModelParams, seed: u64, budget: &Budget) -> Result<Self> {
        let n = box_spec.vertex_count()?;
        budget.check_complete(n)?;
        let weights = sample_weights(n, params.tau, seed)?;
        Self::new(box_spec, weights, params, seed, budget)
    }

    /// Same field with the weight of `v` replaced (must be >= 1).
    pub fn with_weight(mut self, v: usize, w: f64) -> Result<Self> {
        if v >= self.vertex_count() {
            return Err(Error::InvalidVertex {
                id: v,
                count: self.vertex_count(),
            });
        }
        if !(w >= 1.0) {
            return Err(Error::domain("weights must be >= 1"));
        }
        self.weights[v] = w;
        self.weight_pow[v] = w.powf(self.params.alpha);
        Ok(self)
    }

    pub fn vertex_count(&self) -> usize {
        self.weights.len()
    }

    pub fn position(&self, u: usize) -> &[f64] {
        let d = self.box_spec.d;
        &self.positions[u * d..(u + 1) * d]
    }

    pub fn rate(&self, u: usize, v: usize) -> f64 {
        let d2 = squared_distance(self.position(u), self.position(v));
        self.weight_pow[u] * self.weight_pow[v] * d2.powf(-0.5 * self.params.alpha_d())
    }

    /// Cost of the pair `{u, v}`, `u != v`.
    #[inline]
    pub fn pair_cost(&self, u: usize, v: usize) -> f64 {
        exp_from_uniform(edge_uniform_unchecked(cost_seed(self.seed), u, v), self.rate(u, v))
    }

    /// Materialize every pair cost.
    pub fn to_cost_map(&self) -> CostMap {
        let n = self.vertex_count();
        let cs = cost_seed(self.seed);
        let mut costs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for v in 1..n {
            for u in 0..v {
                costs.push(exp_from_uniform(edge_uniform_unchecked(cs, u, v), self.rate(u, v)));
            }
        }
        CostMap {
            rate_model: RateModel::CffpRate,
            vertex_count: n,
            storage: CostStorage::Dense(costs),
        }
    }
}

/// Costs on every pair of the box with rate `(w_u w_v)^α |u-v|^{-αd}`.
pub fn sample_cffp_costs(box_spec: &BoxSpec, weights: &[f64], params: &ModelParams, seed: u64) -> Result<CostMap> {
    sample_cffp_costs_with_budget(box_spec, weights, params, seed, &Budget::default())
}

pub fn sample_cffp_costs_with_budget(
    box_spec: &BoxSpec,
    weights: &[f64],
    params: &ModelParams,
    seed: u64,
    budget: &Budget,
) -> Result<CostMap> {
    Ok(CffpField::new(box_spec, weights.to_vec(), params, seed, budget)?.to_cost_map())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::connection_prob;

    fn line(side: usize) -> BoxSpec {
        BoxSpec::new(1, side).unwrap()
    }

    #[test]
    fn box_indexing_round_trips() {
        let b = BoxSpec::new(3, 4).unwrap();
        assert_eq!(b.vertex_count().unwrap(), 64);
        for i in 0..64 {
            assert_eq!(b.index_of(&b.coords(i)), Some(i));
        }
        assert_eq!(b.coords(b.center()), vec![2, 2, 2]);
        assert_eq!(b.index_of(&[4, 0, 0]), None);
        assert!(BoxSpec::new(40, 1000).is_err());
    }

    #[test]
    fn zero_lambda_gives_only_grid_edges() {
        let params = ModelParams::lrp(1, 1.5, 0.0).unwrap();
        let g = sample_graph(&line(10), &params, ModelTag::Lrp, 3).unwrap();
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, (0..9).map(|i| (i, i + 1)).collect::<Vec<_>>());

        let b2 = BoxSpec::new(2, 4).unwrap();
        let g2 = sample_graph(&b2, &ModelParams::lrp(2, 1.5, 0.0).unwrap(), ModelTag::Lrp, 3).unwrap();
        assert_eq!(g2.edge_count(), 2 * 4 * 3);
    }

    #[test]
    fn huge_lambda_gives_complete_graph() {
        let params = ModelParams::lrp(1, 1.5, 1e9).unwrap();
        let g = sample_graph(&line(5), &params, ModelTag::Lrp, 11).unwrap();
        assert_eq!(g.edge_count(), 10);
    }

    #[test]
    fn girg_has_no_forced_grid_edges() {
        let params = ModelParams::new(1, 1.5, 2.5, 0.0).unwrap();
        let g = sample_graph(&line(50), &params, ModelTag::Girg, 5).unwrap();
        assert_eq!(g.edge_count(), 0);
        for i in 0..50 {
            let x = g.position(i)[0];
            assert!((0.0..50.0).contains(&x));
        }
    }

    #[test]
    fn adjacency_is_symmetric_without_loops() {
        let params = ModelParams::new(2, 1.3, 3.0, 0.7).unwrap();
        let g = sample_graph(&BoxSpec::new(2, 9).unwrap(), &params, ModelTag::Sfp, 77).unwrap();
        for u in 0..g.vertex_count() {
            for &v in g.neighbors(u) {
                assert_ne!(u, v as usize);
                assert!(g.has_edge(v as usize, u));
            }
        }
    }

    #[test]
    fn graph_matches_lazy_realization() {
        let params = ModelParams::new(1, 1.2, 2.8, 0.4).unwrap();
        let r = Realization::new(&line(60), &params, ModelTag::Sfp, 19, &Budget::default()).unwrap();
        let g = r.clone().into_graph();
        for u in 0..60 {
            let lazy: Vec<u32> = r.neighbors(u).into_iter().map(|v| v as u32).collect();
            assert_eq!(lazy.as_slice(), g.neighbors(u));
        }
    }

    #[test]
    fn budget_is_enforced() {
        let params = ModelParams::lrp(2, 1.5, 0.1).unwrap();
        let budget = Budget {
            sparse_vertices: 99,
            complete_vertices: 10,
        };
        let err = sample_graph_with_budget(&BoxSpec::new(2, 10).unwrap(), &params, ModelTag::Lrp, 0, &budget).unwrap_err();
        assert!(err.is_budget());
        let unit = ModelParams::new(1, 1.5, 4.0, 1.0).unwrap();
        let err = sample_cffp_costs_with_budget(&line(11), &[1.0; 11], &unit, 0, &budget).unwrap_err();
        assert!(err.is_budget());
        assert_eq!(Budget::parse("500").unwrap().complete_vertices, 500);
        assert_eq!(Budget::parse("500/20").unwrap().complete_vertices, 20);
        assert!(Budget::parse("x").is_err());
    }

    #[test]
    fn weights_respect_floor_and_are_reproducible() {
        let w = sample_weights(10_000, 2.5, 4).unwrap();
        assert!(w.iter().all(|&x| x >= 1.0));
        assert_eq!(w, sample_weights(10_000, 2.5, 4).unwrap());
        assert!(sample_weights(0, 2.5, 4).is_err());
    }

    #[test]
    fn pareto_tail_fraction() {
        let n = 1_000_000;
        let w = sample_weights(n, 3.0, 2024).unwrap();
        let frac = w.iter().filter(|&&x| x >= 10.0).count() as f64 / n as f64;
        let sigma = (0.01f64 * 0.99 / n as f64).sqrt();
        assert!((frac - 0.01).abs() <= 3.0 * sigma, "fraction {frac}");
    }

    #[test]
    fn edge_frequency_matches_kernel() {
        // SFP pair at distance two; conditioning on unit weights is achieved
        // by forcing them, the edge stream still varies with the seed.
        let params = ModelParams::new(1, 1.5, 4.0, 0.5).unwrap();
        let b = line(100);
        let pos: Vec<f64> = (0..100).flat_map(|i| b.lattice_position(i)).collect();
        let trials = 10_000;
        let mut hits = 0;
        for s in 0..trials {
            let r = Realization::from_vertex_data(ModelTag::Sfp, b.clone(), params, s, vec![1.0; 100], pos.clone());
            hits += r.has_edge(40, 42) as usize;
        }
        let target = connection_prob(1.0, 1.0, 2.0, &params).unwrap();
        assert!((target - 0.5 * 2f64.powf(-1.5)).abs() < 1e-15);
        let sigma = (target * (1.0 - target) / trials as f64).sqrt();
        let freq = hits as f64 / trials as f64;
        assert!((freq - target).abs() <= 3.0 * sigma, "freq {freq} target {target}");
    }

    #[test]
    fn fpp_costs_are_exp_one() {
        let params = ModelParams::lrp(1, 1.5, 0.0).unwrap();
        let b = line(1_000_001);
        // a path graph built directly, sampling the full box would be quadratic
        let graph = SampledGraph::from_parts(
            ModelTag::Lrp,
            b.clone(),
            params,
            0,
            vec![1.0; 1_000_001],
            (0..1_000_001).map(|i| i as f64).collect(),
            (0..1_000_000).map(|i| (i, i + 1)),
        )
        .unwrap();
        let costs = sample_fpp_costs(&graph, 8);
        assert_eq!(costs.len(), 1_000_000);
        let mean = costs.iter().map(|(_, c)| c).sum::<f64>() / costs.len() as f64;
        assert!((mean - 1.0).abs() < 0.003, "mean {mean}");
        assert!(costs.iter().all(|(_, c)| c >= 0.0));
        assert_eq!(costs, sample_fpp_costs(&graph, 8));
    }

    #[test]
    fn cffp_materialized_matches_lazy() {
        let params = ModelParams::new(2, 1.5, 4.0, 1.0).unwrap();
        let b = BoxSpec::new(2, 6).unwrap();
        let field = CffpField::sample(&b, &params, 31, &Budget::default()).unwrap();
        let map = sample_cffp_costs(&b, &field.weights, &params, 31).unwrap();
        assert_eq!(map.len(), 36 * 35 / 2);
        for ((u, v), c) in map.iter() {
            assert_eq!(c, field.pair_cost(u, v));
            assert_eq!(map.get(v, u), Some(c));
        }
        let bad = ModelParams { lambda: 0.5, ..params };
        assert!(sample_cffp_costs(&b, &field.weights, &bad, 31).is_err());
        assert!(sample_cffp_costs(&b, &field.weights[..3], &params, 31).is_err());
    }

    #[test]
    fn cffp_cost_scales_with_rate() {
        let params = ModelParams::new(1, 1.0, 4.0, 1.0).unwrap();
        let b = line(2);
        let trials = 100_000u64;
        let mean = |w: f64| {
            (0..trials)
                .map(|s| {
                    CffpField::new(&b, vec![w, w], &params, s, &Budget::default())
                        .unwrap()
                        .pair_cost(0, 1)
                })
                .sum::<f64>()
                / trials as f64
        };
        let sigma = (1.0 / trials as f64).sqrt();
        let unit = mean(1.0);
        assert!((unit - 1.0).abs() <= 3.0 * sigma, "unit mean {unit}");
        let quartered = mean(2.0);
        assert!((quartered - 0.25).abs() <= 3.0 * 0.25 * sigma, "mean {quartered}");

        let t = 0.5;
        // unit weights, distance 3, alpha*d = 1
        let rate = 1.0 / 3.0;
        let b3 = line(4);
        let hits = (0..trials)
            .filter(|&s| {
                CffpField::new(&b3, vec![1.0; 4], &params, s, &Budget::default())
                    .unwrap()
                    .pair_cost(0, 3)
                    <= t
            })
            .count();
        let target = 1.0 - (-rate * t).exp();
        let sd = (target * (1.0 - target) / trials as f64).sqrt();
        assert!((hits as f64 / trials as f64 - target).abs() <= 3.0 * sd);
    }
}
