//! Hop and cost distances, k-balls and t-balls, and small exhaustive oracles.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{fpp_edge_cost, squared_distance, BoxSpec, CffpField, CostMap, Realization, SampledGraph};

/// Anything whose neighbourhoods can be enumerated.
pub trait Topology {
    fn vertex_count(&self) -> usize;
    fn for_each_neighbor(&self, u: usize, f: &mut dyn FnMut(usize));
}

/// Euclidean distance between vertices.
pub trait Geometry {
    fn geo_dist(&self, u: usize, v: usize) -> f64;
}

/// Anything carrying nonnegative costs on vertex pairs.
pub trait CostTopology {
    fn vertex_count(&self) -> usize;
    fn for_each_cost(&self, u: usize, f: &mut dyn FnMut(usize, f64));
    /// For complete graphs: the cost of every pair, enabling the quadratic
    /// label-setting search.
    fn dense_cost(&self, _u: usize, _v: usize) -> Option<f64> {
        None
    }
    fn is_complete(&self) -> bool {
        false
    }
}

impl Topology for SampledGraph {
    fn vertex_count(&self) -> usize {
        SampledGraph::vertex_count(self)
    }

    fn for_each_neighbor(&self, u: usize, f: &mut dyn FnMut(usize)) {
        for &v in self.neighbors(u) {
            f(v as usize);
        }
    }
}

impl Topology for Realization {
    fn vertex_count(&self) -> usize {
        Realization::vertex_count(self)
    }

    fn for_each_neighbor(&self, u: usize, f: &mut dyn FnMut(usize)) {
        for v in 0..Realization::vertex_count(self) {
            if self.has_edge(u, v) {
                f(v);
            }
        }
    }
}

impl Geometry for SampledGraph {
    fn geo_dist(&self, u: usize, v: usize) -> f64 {
        self.dist(u, v)
    }
}

impl Geometry for Realization {
    fn geo_dist(&self, u: usize, v: usize) -> f64 {
        self.dist(u, v)
    }
}

impl Geometry for CffpField {
    fn geo_dist(&self, u: usize, v: usize) -> f64 {
        squared_distance(self.position(u), self.position(v)).sqrt()
    }
}

impl Geometry for BoxSpec {
    fn geo_dist(&self, u: usize, v: usize) -> f64 {
        squared_distance(&self.lattice_position(u), &self.lattice_position(v)).sqrt()
    }
}

impl CostTopology for CostMap {
    fn vertex_count(&self) -> usize {
        CostMap::vertex_count(self)
    }

    fn for_each_cost(&self, u: usize, f: &mut dyn FnMut(usize, f64)) {
        CostMap::for_each_cost(self, u, f)
    }

    fn dense_cost(&self, u: usize, v: usize) -> Option<f64> {
        if self.is_complete() {
            self.get(u, v)
        } else {
            None
        }
    }

    fn is_complete(&self) -> bool {
        CostMap::is_complete(self)
    }
}

impl CostTopology for CffpField {
    fn vertex_count(&self) -> usize {
        CffpField::vertex_count(self)
    }

    fn for_each_cost(&self, u: usize, f: &mut dyn FnMut(usize, f64)) {
        for v in (0..CffpField::vertex_count(self)).filter(|&v| v != u) {
            f(v, self.pair_cost(u, v));
        }
    }

    fn dense_cost(&self, u: usize, v: usize) -> Option<f64> {
        Some(self.pair_cost(u, v))
    }

    fn is_complete(&self) -> bool {
        true
    }
}

/// FPP on a lazily explored realization: Exp(1) costs on its edges, equal to
/// those of [`crate::sampler::sample_fpp_costs`] under `cost_seed`.
#[derive(Debug, Clone, Copy)]
pub struct LazyFpp<'a> {
    pub realization: &'a Realization,
    pub seed: u64,
}

impl CostTopology for LazyFpp<'_> {
    fn vertex_count(&self) -> usize {
        self.realization.vertex_count()
    }

    fn for_each_cost(&self, u: usize, f: &mut dyn FnMut(usize, f64)) {
        for v in 0..self.realization.vertex_count() {
            if self.realization.has_edge(u, v) {
                f(v, fpp_edge_cost(self.seed, u, v));
            }
        }
    }
}

fn check_id(n: usize, id: usize) -> Result<()> {
    if id >= n {
        return Err(Error::InvalidVertex { id, count: n });
    }
    Ok(())
}

/// Hop distances from `x`, exploring at most `max_depth` layers.
pub fn hop_distances(topo: &(impl Topology + ?Sized), x: usize, max_depth: Option<u32>) -> Result<Vec<Option<u32>>> {
    let n = topo.vertex_count();
    check_id(n, x)?;
    let mut dist = vec![None; n];
    dist[x] = Some(0);
    let mut queue = VecDeque::from([x]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        if max_depth.is_some_and(|m| du >= m) {
            continue;
        }
        topo.for_each_neighbor(u, &mut |v| {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        });
    }
    Ok(dist)
}

/// Breadth-first hop distance; `None` when `y` is unreachable.
pub fn graph_distance(topo: &(impl Topology + ?Sized), x: usize, y: usize) -> Result<Option<u32>> {
    graph_distance_bounded(topo, x, y, u32::MAX)
}

/// Hop distance if it is at most `max_hops`, stopping as soon as `y` is found.
pub fn graph_distance_bounded(topo: &(impl Topology + ?Sized), x: usize, y: usize, max_hops: u32) -> Result<Option<u32>> {
    let n = topo.vertex_count();
    check_id(n, x)?;
    check_id(n, y)?;
    if x == y {
        return Ok(Some(0));
    }
    let mut dist: Vec<u32> = vec![u32::MAX; n];
    dist[x] = 0;
    let mut queue = VecDeque::from([x]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u];
        if du >= max_hops {
            break;
        }
        let mut found = false;
        topo.for_each_neighbor(u, &mut |v| {
            if dist[v] == u32::MAX {
                dist[v] = du + 1;
                found |= v == y;
                queue.push_back(v);
            }
        });
        if found {
            return Ok(Some(du + 1));
        }
    }
    Ok(None)
}

/// Hop distances from `x` to several targets in one search bounded by
/// `max_hops`.
pub fn graph_distances_to(
    topo: &(impl Topology + ?Sized),
    x: usize,
    targets: &[usize],
    max_hops: u32,
) -> Result<Vec<Option<u32>>> {
    let n = topo.vertex_count();
    check_id(n, x)?;
    for &y in targets {
        check_id(n, y)?;
    }
    let mut dist: Vec<u32> = vec![u32::MAX; n];
    dist[x] = 0;
    let mut remaining = targets.iter().filter(|&&y| y != x).count();
    let mut queue = VecDeque::from([x]);
    while remaining > 0 {
        let Some(u) = queue.pop_front() else { break };
        let du = dist[u];
        if du >= max_hops {
            break;
        }
        topo.for_each_neighbor(u, &mut |v| {
            if dist[v] == u32::MAX {
                dist[v] = du + 1;
                queue.push_back(v);
            }
        });
        remaining = targets.iter().filter(|&&y| dist[y] == u32::MAX).count();
    }
    Ok(targets
        .iter()
        .map(|&y| (dist[y] <= max_hops).then_some(dist[y]))
        .collect())
}

/// `{y : d_G(x, y) <= k}` in increasing id order.
pub fn k_ball(topo: &(impl Topology + ?Sized), x: usize, k: u32) -> Result<Vec<usize>> {
    let dist = hop_distances(topo, x, Some(k))?;
    Ok(dist
        .iter()
        .enumerate()
        .filter_map(|(v, d)| d.map(|_| v))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cost distances from `x`; vertices farther than `limit` are reported as
/// `None`. Complete graphs use the array-based quadratic search.
pub fn cost_distances(costs: &(impl CostTopology + ?Sized), x: usize, limit: Option<f64>) -> Result<Vec<Option<f64>>> {
    let n = costs.vertex_count();
    check_id(n, x)?;
    let limit = limit.unwrap_or(f64::INFINITY);
    if limit < 0.0 {
        return Err(Error::domain(format!("cost limit must be nonnegative, got {limit}")));
    }
    let settled = if costs.is_complete() {
        dense_dijkstra(costs, x, limit)
    } else {
        heap_dijkstra(costs, x, limit)
    };
    Ok(settled
        .into_iter()
        .map(|d| (d.is_finite() && d <= limit).then_some(d))
        .collect())
}

fn heap_dijkstra(costs: &(impl CostTopology + ?Sized), x: usize, limit: f64) -> Vec<f64> {
    let n = costs.vertex_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[x] = 0.0;
    let mut heap = BinaryHeap::from([HeapItem(0.0, x)]);
    while let Some(HeapItem(du, u)) = heap.pop() {
        if done[u] {
            continue;
        }
        if du > limit {
            break;
        }
        done[u] = true;
        costs.for_each_cost(u, &mut |v, c| {
            let alt = du + c;
            if alt < dist[v] {
                dist[v] = alt;
                heap.push(HeapItem(alt, v));
            }
        });
    }
    for (d, ok) in dist.iter_mut().zip(&done) {
        if !ok {
            *d = f64::INFINITY;
        }
    }
    dist
}

fn dense_dijkstra(costs: &(impl CostTopology + ?Sized), x: usize, limit: f64) -> Vec<f64> {
    let n = costs.vertex_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[x] = 0.0;
    loop {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for v in 0..n {
            if !done[v] && dist[v] < best_d {
                best_d = dist[v];
                best = Some(v);
            }
        }
        let Some(u) = best else { break };
        if best_d > limit {
            break;
        }
        done[u] = true;
        for v in 0..n {
            if !done[v] {
                let alt = best_d + costs.dense_cost(u, v).unwrap_or(f64::INFINITY);
                if alt < dist[v] {
                    dist[v] = alt;
                }
            }
        }
    }
    for (d, ok) in dist.iter_mut().zip(&done) {
        if !ok {
            *d = f64::INFINITY;
        }
    }
    dist
}

/// Cheapest path cost from `x` to `y`; `None` when no path exists.
pub fn cost_distance(costs: &(impl CostTopology + ?Sized), x: usize, y: usize) -> Result<Option<f64>> {
    check_id(costs.vertex_count(), y)?;
    if x == y {
        check_id(costs.vertex_count(), x)?;
        return Ok(Some(0.0));
    }
    Ok(cost_distances(costs, x, None)?[y])
}

/// `{y : d_cost(x, y) <= t}` in increasing id order.
pub fn t_ball(costs: &(impl CostTopology + ?Sized), x: usize, t: f64) -> Result<Vec<usize>> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("t must be nonnegative, got {t}")));
    }
    let dist = cost_distances(costs, x, Some(t))?;
    Ok(dist
        .iter()
        .enumerate()
        .filter_map(|(v, d)| d.map(|_| v))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadiiKind {
    HopBall,
    CostBall,
}

/// Ball sizes and maximal Euclidean radii around a root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSeries {
    pub root: usize,
    pub radii_kind: RadiiKind,
    pub thresholds: Vec<f64>,
    pub sizes: Vec<usize>,
    pub max_geo_radius: Vec<f64>,
}

impl BallSeries {
    /// CSV with header `threshold,size,max_geo_radius`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,size,max_geo_radius\n");
        for i in 0..self.thresholds.len() {
            writeln!(out, "{},{},{}", self.thresholds[i], self.sizes[i], self.max_geo_radius[i]).unwrap();
        }
        out
    }
}

fn check_increasing(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::domain("thresholds must be nonempty"));
    }
    if thresholds.iter().any(|t| !(*t >= 0.0)) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("thresholds must be nonnegative and strictly increasing"));
    }
    Ok(())
}

fn series_from_levels(
    root: usize,
    radii_kind: RadiiKind,
    thresholds: &[f64],
    levels: impl Iterator<Item = (usize, f64)>,
    geometry: &(impl Geometry + ?Sized),
) -> BallSeries {
    let mut members: Vec<(f64, usize)> = levels.map(|(v, d)| (d, v)).collect();
    members.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut sizes = Vec::with_capacity(thresholds.len());
    let mut radii = Vec::with_capacity(thresholds.len());
    let (mut i, mut radius) = (0, 0.0f64);
    for &t in thresholds {
        while i < members.len() && members[i].0 <= t {
            radius = radius.max(geometry.geo_dist(root, members[i].1));
            i += 1;
        }
        sizes.push(i);
        radii.push(radius);
    }
    BallSeries {
        root,
        radii_kind,
        thresholds: thresholds.to_vec(),
        sizes,
        max_geo_radius: radii,
    }
}

/// Hop-ball series at integer thresholds (which must be increasing).
pub fn hop_ball_series<T: Topology + Geometry + ?Sized>(topo: &T, root: usize, thresholds: &[u32]) -> Result<BallSeries> {
    let ts: Vec<f64> = thresholds.iter().map(|&k| k as f64).collect();
    check_increasing(&ts)?;
    let dist = hop_distances(topo, root, thresholds.last().copied())?;
    let levels = dist.iter().enumerate().filter_map(|(v, d)| d.map(|d| (v, d as f64)));
    Ok(series_from_levels(root, RadiiKind::HopBall, &ts, levels, topo))
}

/// Cost-ball series; `geometry` supplies vertex positions.
pub fn cost_ball_series(
    costs: &(impl CostTopology + ?Sized),
    geometry: &(impl Geometry + ?Sized),
    root: usize,
    thresholds: &[f64],
) -> Result<BallSeries> {
    check_increasing(thresholds)?;
    let dist = cost_distances(costs, root, thresholds.last().copied())?;
    let levels = dist.iter().enumerate().filter_map(|(v, d)| d.map(|d| (v, d)));
    Ok(series_from_levels(root, RadiiKind::CostBall, thresholds, levels, geometry))
}

/// Step limit of the exhaustive path search.
pub const BRUTE_FORCE_STEP_LIMIT: u64 = 50_000_000;

/// Shortest hop distance by enumerating every simple path of at most
/// `max_len` edges.
pub fn brute_force_distance(topo: &(impl Topology + ?Sized), x: usize, y: usize, max_len: u32) -> Result<Option<u32>> {
    let n = topo.vertex_count();
    check_id(n, x)?;
    check_id(n, y)?;
    if x == y {
        return Ok(Some(0));
    }
    let adjacency: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            let mut row = Vec::new();
            topo.for_each_neighbor(u, &mut |v| row.push(v));
            row
        })
        .collect();
    let mut on_path = vec![false; n];
    on_path[x] = true;
    let mut best = None;
    let mut steps = 0u64;
    dfs_paths(&adjacency, x, y, 0, max_len, &mut on_path, &mut best, &mut steps)?;
    Ok(best)
}

#[allow(clippy::too_many_arguments)]
fn dfs_paths(
    adjacency: &[Vec<usize>],
    u: usize,
    y: usize,
    len: u32,
    max_len: u32,
    on_path: &mut [bool],
    best: &mut Option<u32>,
    steps: &mut u64,
) -> Result<()> {
    if len >= max_len {
        return Ok(());
    }
    for &v in &adjacency[u] {
        *steps += 1;
        if *steps > BRUTE_FORCE_STEP_LIMIT {
            return Err(Error::Budget {
                what: "path enumeration steps",
                required: *steps as u128,
                limit: BRUTE_FORCE_STEP_LIMIT as u128,
            });
        }
        if on_path[v] {
            continue;
        }
        if v == y {
            *best = Some(best.map_or(len + 1, |b| b.min(len + 1)));
            continue;
        }
        on_path[v] = true;
        dfs_paths(adjacency, v, y, len + 1, max_len, on_path, best, steps)?;
        on_path[v] = false;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::ModelParams;
    use crate::sampler::{sample_graph, ModelTag, RateModel};

    fn path(n: usize) -> SampledGraph {
        SampledGraph::from_edges(&BoxSpec::new(1, n).unwrap(), (0..n - 1).map(|i| (i, i + 1))).unwrap()
    }

    #[test]
    fn grid_distance_and_shortcut() {
        let g = path(10);
        assert_eq!(graph_distance(&g, 0, 7).unwrap(), Some(7));
        let g2 = g.with_extra_edges([(0, 7)]).unwrap();
        assert_eq!(graph_distance(&g2, 0, 7).unwrap(), Some(1));
        assert!(graph_distance(&g, 0, 10).is_err());
        assert_eq!(graph_distance_bounded(&g, 0, 7, 6).unwrap(), None);
        assert_eq!(graph_distance_bounded(&g, 0, 7, 7).unwrap(), Some(7));
        assert_eq!(graph_distances_to(&g, 2, &[2, 9, 0], 7).unwrap(), vec![Some(0), Some(7), Some(2)]);
    }

    #[test]
    fn unreachable_is_none() {
        let b = BoxSpec::new(1, 4).unwrap();
        let g = SampledGraph::from_edges(&b, [(0, 1), (2, 3)]).unwrap();
        assert_eq!(graph_distance(&g, 0, 3).unwrap(), None);
        assert_eq!(brute_force_distance(&g, 0, 3, 10).unwrap(), None);
        assert_eq!(brute_force_distance(&g, 0, 1, 10).unwrap(), Some(1));
    }

    #[test]
    fn triangle_cost_distance() {
        let costs = CostMap::from_pairs(RateModel::UnitRate, 3, [((0, 1), 1.0), ((1, 2), 1.0), ((0, 2), 2.5)]).unwrap();
        assert_eq!(cost_distance(&costs, 0, 2).unwrap(), Some(2.0));
        assert_eq!(cost_distance(&costs, 1, 1).unwrap(), Some(0.0));
        let cheaper = costs.with_cost(0, 2, 1.5).unwrap();
        assert_eq!(cost_distance(&cheaper, 0, 2).unwrap(), Some(1.5));
        assert_eq!(t_ball(&costs, 0, 1.0).unwrap(), vec![0, 1]);
        assert_eq!(t_ball(&costs, 0, 0.0).unwrap(), vec![0]);
    }

    #[test]
    fn one_dimensional_balls() {
        let g = path(21);
        for k in 0..=10u32 {
            assert_eq!(k_ball(&g, 10, k).unwrap().len(), 2 * k as usize + 1);
        }
        let s = hop_ball_series(&g, 10, &[0, 1, 5]).unwrap();
        assert_eq!(s.sizes, vec![1, 3, 11]);
        assert_eq!(s.max_geo_radius, vec![0.0, 1.0, 5.0]);
        assert_eq!(s.to_csv(), "threshold,size,max_geo_radius\n0,1,0\n1,3,1\n5,11,5\n");
        assert!(hop_ball_series(&g, 10, &[2, 1]).is_err());
    }

    #[test]
    fn two_dimensional_hop_balls_are_diamonds() {
        let params = ModelParams::lrp(2, 1.5, 0.0).unwrap();
        let b = BoxSpec::new(2, 15).unwrap();
        let g = sample_graph(&b, &params, ModelTag::Lrp, 0).unwrap();
        let s = hop_ball_series(&g, b.center(), &[0, 1, 2, 3, 4]).unwrap();
        // lattice points with |x|_1 <= k
        let oracle: Vec<usize> = (0..=4i64)
            .map(|k| {
                let mut c = 0;
                for x in -k..=k {
                    for y in -k..=k {
                        c += (x.abs() + y.abs() <= k) as usize;
                    }
                }
                c
            })
            .collect();
        assert_eq!(s.sizes, oracle);
    }

    #[test]
    fn dense_and_heap_dijkstra_agree() {
        let params = ModelParams::new(1, 1.5, 4.0, 1.0).unwrap();
        let b = BoxSpec::new(1, 40).unwrap();
        let field = CffpField::sample(&b, &params, 5, &Default::default()).unwrap();
        let dense = cost_distances(&field, 3, None).unwrap();
        let map = field.to_cost_map();
        let sparse = CostMap::from_pairs(RateModel::CffpRate, 40, map.iter()).unwrap();
        let heap = cost_distances(&sparse, 3, None).unwrap();
        for (a, b) in dense.iter().zip(&heap) {
            assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
        }
        let series = cost_ball_series(&field, &field, 3, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(series.sizes[0], 1);
        let members = t_ball(&field, 3, 0.5).unwrap();
        assert_eq!(members.len(), series.sizes[1]);
    }

    #[test]
    fn lazy_exploration_matches_materialized() {
        let params = ModelParams::new(1, 1.3, 2.7, 0.5).unwrap();
        let b = BoxSpec::new(1, 200).unwrap();
        let r = Realization::new(&b, &params, ModelTag::Sfp, 12, &Default::default()).unwrap();
        let g = r.clone().into_graph();
        assert_eq!(hop_distances(&r, 100, Some(4)).unwrap(), hop_distances(&g, 100, Some(4)).unwrap());
        let costs = crate::sampler::sample_fpp_costs(&g, 77);
        let lazy = LazyFpp { realization: &r, seed: 77 };
        assert_eq!(cost_distances(&lazy, 100, Some(3.0)).unwrap(), cost_distances(&costs, 100, Some(3.0)).unwrap());
    }
}
