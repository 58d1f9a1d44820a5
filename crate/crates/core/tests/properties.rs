use proptest::prelude::*;

use percolate::estimators::{
    bk_brute_force, mc_ball_growth, mc_tail_grid, random_increasing_event, wilson_interval, Event, ModelConfig, Process,
    Threshold,
};
use percolate::io::GraphFile;
use percolate::kernels::{connection_prob, pareto_quantile, ModelParams};
use percolate::metrics::{cost_distances, hop_distances, k_ball};
use percolate::sampler::{sample_fpp_costs, sample_graph, BoxSpec, ModelTag};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn connection_prob_is_monotone(
        wx in 1.0..20.0f64, wy in 1.0..20.0f64, dist in 1.0..500.0f64,
        alpha in 1.0..3.0f64, lambda in 0.0..2.0f64, bump in 0.0..1.0f64,
    ) {
        let p = ModelParams::new(1, alpha, 3.0, lambda).unwrap();
        let q = ModelParams::new(1, alpha, 3.0, lambda + bump).unwrap();
        let base = connection_prob(wx, wy, dist, &p).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!(connection_prob(wx, wy, dist, &q).unwrap() >= base);
        prop_assert!(connection_prob(wx + bump, wy, dist, &p).unwrap() >= base);
        prop_assert!(connection_prob(wx, wy, dist + bump, &p).unwrap() <= base);
    }

    #[test]
    fn pareto_quantile_is_increasing(u in 0.0..0.999f64, du in 0.0..0.0009f64, tau in 1.1..8.0f64) {
        let a = pareto_quantile(u, tau).unwrap();
        prop_assert!(a >= 1.0);
        prop_assert!(pareto_quantile(u + du, tau).unwrap() >= a);
        prop_assert!(((1.0 - u) - a.powf(1.0 - tau)).abs() < 1e-9);
    }

    #[test]
    fn wilson_interval_brackets_estimate(trials in 1usize..5000, frac in 0.0..=1.0f64) {
        let s = (frac * trials as f64).floor() as usize;
        let (lo, hi) = wilson_interval(s, trials).unwrap();
        let p = s as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn bk_holds_for_random_increasing_events(n in 1usize..=8, seed in any::<u64>(), ps in prop::collection::vec(0.0..=1.0f64, 8)) {
        let a = random_increasing_event(n, seed).unwrap();
        let b = random_increasing_event(n, seed ^ 0x5555).unwrap();
        prop_assert!(a.is_increasing() && b.is_increasing());
        let r = bk_brute_force(n, &ps[..n], &a, &b).unwrap();
        prop_assert!(r.p_disjoint <= r.p_product + 1e-12);
        prop_assert!(r.p_disjoint <= r.event_probs[0].min(r.event_probs[1]) + 1e-12);
    }

    #[test]
    fn sampled_hop_and_cost_distances_are_metrics(seed in any::<u64>(), x in 0usize..144, y in 0usize..144, z in 0usize..144) {
        let b = BoxSpec::new(2, 12).unwrap();
        let g = sample_graph(&b, &ModelParams::new(2, 1.4, 2.8, 0.6).unwrap(), ModelTag::Sfp, seed).unwrap();
        let hx = hop_distances(&g, x, None).unwrap();
        let hy = hop_distances(&g, y, None).unwrap();
        prop_assert_eq!(hx[y], hy[x]);
        prop_assert!(hx[z].unwrap() <= hx[y].unwrap() + hy[z].unwrap());
        let geo = b.coords(x).iter().zip(b.coords(y)).map(|(a, c)| (a - c).unsigned_abs()).sum::<u64>();
        prop_assert!(u64::from(hx[y].unwrap()) <= geo);

        let costs = sample_fpp_costs(&g, seed);
        let cx = cost_distances(&costs, x, None).unwrap();
        let cy = cost_distances(&costs, y, None).unwrap();
        prop_assert!((cx[y].unwrap() - cy[x].unwrap()).abs() < 1e-9);
        prop_assert!(cx[z].unwrap() <= cx[y].unwrap() + cy[z].unwrap() + 1e-9);
    }

    #[test]
    fn balls_are_nested(seed in any::<u64>(), x in 0usize..300, k in 0u32..6) {
        let b = BoxSpec::new(1, 300).unwrap();
        let g = sample_graph(&b, &ModelParams::lrp(1, 1.3, 0.4).unwrap(), ModelTag::Lrp, seed).unwrap();
        let small = k_ball(&g, x, k).unwrap();
        let big = k_ball(&g, x, k + 1).unwrap();
        prop_assert!(small.iter().all(|v| big.binary_search(v).is_ok()));
        prop_assert!(small.contains(&x));
    }

    #[test]
    fn graph_files_round_trip(seed in any::<u64>(), costs in any::<bool>()) {
        let b = BoxSpec::new(2, 6).unwrap();
        let g = sample_graph(&b, &ModelParams::new(2, 1.5, 3.0, 1.0).unwrap(), ModelTag::Sfp, seed).unwrap();
        let c = costs.then(|| sample_fpp_costs(&g, seed));
        let text = GraphFile::from_graph(&g, c.as_ref()).to_text();
        let parsed = GraphFile::parse(&text).unwrap();
        prop_assert_eq!(parsed.to_text(), text);
        let back = parsed.to_graph().unwrap();
        prop_assert!(back.is_subgraph_of(&g) && g.is_subgraph_of(&back));
        prop_assert_eq!(&back.weights, &g.weights);
    }
}

#[test]
fn same_seed_same_graph() {
    let b = BoxSpec::new(1, 500).unwrap();
    let p = ModelParams::new(1, 1.5, 2.5, 0.7).unwrap();
    let a = sample_graph(&b, &p, ModelTag::Sfp, 42).unwrap();
    let c = sample_graph(&b, &p, ModelTag::Sfp, 42).unwrap();
    assert!(a.edges().eq(c.edges()));
    let other = sample_graph(&b, &p, ModelTag::Sfp, 43).unwrap();
    assert!(!a.edges().eq(other.edges()));
}

#[test]
fn lrp_center_degree_matches_kernel_sum() {
    let side = 401;
    let b = BoxSpec::new(1, side).unwrap();
    let (alpha, lambda) = (1.5f64, 0.5f64);
    let p = ModelParams::lrp(1, alpha, lambda).unwrap();
    let c = side / 2;
    let probs: Vec<f64> = (0..side)
        .filter(|&y| y != c)
        .map(|y| {
            let r = y.abs_diff(c) as f64;
            if r == 1.0 {
                1.0
            } else {
                (lambda * r.powf(-alpha)).min(1.0)
            }
        })
        .collect();
    let mean: f64 = probs.iter().sum();
    let var: f64 = probs.iter().map(|q| q * (1.0 - q)).sum();
    let trials = 400;
    let total: usize = (0..trials).map(|s| sample_graph(&b, &p, ModelTag::Lrp, s).unwrap().degree(c)).sum();
    let avg = total as f64 / trials as f64;
    let se = (var / trials as f64).sqrt();
    assert!((avg - mean).abs() < 4.0 * se, "mean degree {avg} vs {mean} (se {se})");
}

#[test]
fn tail_estimates_grow_with_threshold() {
    let cfg = ModelConfig::new(Process::Lrp, BoxSpec::new(1, 400).unwrap(), ModelParams::lrp(1, 1.5, 0.3).unwrap());
    let ks: Vec<Threshold> = (1..=10).chain([100]).map(Threshold::Hops).collect();
    let est = mc_tail_grid(&cfg, &[(150, 250)], &ks, 300, 3).unwrap();
    for w in est.windows(2) {
        assert!(w[0].successes <= w[1].successes);
    }
    assert_eq!(est.last().unwrap().successes, 300);
}

#[test]
fn ball_growth_is_nondecreasing() {
    let params = ModelParams::new(1, 1.5, 4.0, 1.0).unwrap();
    let cfg = ModelConfig::new(Process::Cffp, BoxSpec::new(1, 101).unwrap(), params);
    let th: Vec<Threshold> = (0..8).map(|i| Threshold::Cost(0.05 * i as f64)).collect();
    let s = mc_ball_growth(&cfg, 50, &th, 60, 4).unwrap();
    assert_eq!(s.mean_sizes[0], 1.0);
    assert!(s.mean_sizes.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn event_grammar_matches_generators() {
    let parsed = Event::parse("open:1&2|open:3", 3).unwrap();
    let built = Event::from_generators(3, &[0b011, 0b100]).unwrap();
    assert!((0..8).all(|w| parsed.contains(w) == built.contains(w)));
}
