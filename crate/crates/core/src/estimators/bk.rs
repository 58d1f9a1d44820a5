use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::stream::{uniform, Stream};

/// Largest number of independent edges enumerated exactly.
pub const BK_MAX_EDGES: usize = 12;

/// An event of the product space `{0,1}^n`, stored as a truth table over the
/// bitmask of open edges (bit `i` is edge `i + 1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    n: usize,
    table: Vec<bool>,
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 || n > BK_MAX_EDGES {
        return Err(Error::Budget {
            what: "edges for exact enumeration",
            required: n as u128,
            limit: BK_MAX_EDGES as u128,
        });
    }
    Ok(())
}

impl Event {
    pub fn from_predicate(n: usize, f: impl Fn(u32) -> bool) -> Result<Self> {
        check_n(n)?;
        Ok(Event {
            n,
            table: (0..1u32 << n).map(f).collect(),
        })
    }

    /// The up-set generated by `generators`: some generator is fully open.
    pub fn from_generators(n: usize, generators: &[u32]) -> Result<Self> {
        check_n(n)?;
        if let Some(g) = generators.iter().find(|&&g| g >> n != 0) {
            return Err(Error::domain(format!("generator {g:#b} uses edges beyond {n}")));
        }
        Self::from_predicate(n, |w| generators.iter().any(|&g| g & w == g))
    }

    pub fn always(n: usize) -> Result<Self> {
        Self::from_predicate(n, |_| true)
    }

    pub fn never(n: usize) -> Result<Self> {
        Self::from_predicate(n, |_| false)
    }

    /// Parse `true`, `false`, or a disjunction of conjunctions such as
    /// `open:1&2|open:3` (edges are numbered from 1).
    pub fn parse(s: &str, n: usize) -> Result<Self> {
        check_n(n)?;
        let mut generators = Vec::new();
        let mut always = false;
        for term in s.split('|').map(str::trim) {
            match term {
                "true" => always = true,
                "false" => {}
                _ => {
                    let body = term
                        .strip_prefix("open:")
                        .ok_or_else(|| Error::domain(format!("cannot parse event term {term:?}")))?;
                    let mut mask = 0u32;
                    for idx in body.split('&').map(|t| t.trim().trim_start_matches("open:")) {
                        let i: usize = idx
                            .parse()
                            .map_err(|_| Error::domain(format!("bad edge index {idx:?} in {term:?}")))?;
                        if i == 0 || i > n {
                            return Err(Error::domain(format!("edge index {i} outside 1..={n}")));
                        }
                        mask |= 1 << (i - 1);
                    }
                    generators.push(mask);
                }
            }
        }
        if always {
            return Self::always(n);
        }
        Self::from_generators(n, &generators)
    }

    pub fn edges(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn contains(&self, omega: u32) -> bool {
        self.table[omega as usize]
    }

    /// Opening an edge never leaves the event.
    pub fn is_increasing(&self) -> bool {
        (0..1u32 << self.n).all(|w| !self.contains(w) || (0..self.n).all(|i| self.contains(w | 1 << i)))
    }

    pub fn probability(&self, probs: &[f64]) -> f64 {
        (0..1u32 << self.n)
            .filter(|&w| self.contains(w))
            .map(|w| outcome_prob(w, probs))
            .fold(0.0, |a, b| a + b)
    }
}

fn outcome_prob(omega: u32, probs: &[f64]) -> f64 {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if omega >> i & 1 == 1 { p } else { 1.0 - p })
        .product()
}

/// Exact probabilities of disjoint occurrence and of the product bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BkResult {
    pub p_disjoint: f64,
    pub p_product: f64,
    /// `Pr[A_i]` for each event.
    pub event_probs: Vec<f64>,
}

impl BkResult {
    pub fn holds(&self, tol: f64) -> bool {
        self.p_disjoint <= self.p_product + tol
    }
}

fn validate(n: usize, probs: &[f64], events: &[&Event]) -> Result<()> {
    check_n(n)?;
    if probs.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: probs.len(),
        });
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::domain("edge probabilities must lie in [0, 1]"));
    }
    for e in events {
        if e.n != n {
            return Err(Error::domain("event defined on a different number of edges"));
        }
        if !e.is_increasing() {
            return Err(Error::domain("disjoint occurrence is only evaluated for increasing events"));
        }
    }
    Ok(())
}

/// Can the open set `open` be split into disjoint parts certifying
/// `events[0], events[1], ...` in turn? For increasing events a part `S`
/// certifies `A` iff `S ∈ A`.
fn splits(open: u32, events: &[&Event]) -> bool {
    match events {
        [] => true,
        [last] => last.contains(open),
        [first, rest @ ..] => {
            let mut s = open;
            loop {
                if first.contains(s) && splits(open & !s, rest) {
                    return true;
                }
                if s == 0 {
                    return false;
                }
                s = (s - 1) & open;
            }
        }
    }
}

/// `Pr[A □ B]` and `Pr[A] Pr[B]` by enumerating all `2^n` outcomes.
pub fn bk_brute_force(n: usize, probs: &[f64], a: &Event, b: &Event) -> Result<BkResult> {
    bk_brute_force_k(n, probs, &[a, b])
}

/// `Pr[A_1 □ ... □ A_k]` and `∏ Pr[A_i]`.
pub fn bk_brute_force_k(n: usize, probs: &[f64], events: &[&Event]) -> Result<BkResult> {
    validate(n, probs, events)?;
    if events.is_empty() {
        return Err(Error::domain("need at least one event"));
    }
    let p_disjoint = (0..1u32 << n)
        .filter(|&w| splits(w, events))
        .map(|w| outcome_prob(w, probs))
        .fold(0.0, |a, b| a + b);
    let event_probs: Vec<f64> = events.iter().map(|e| e.probability(probs)).collect();
    Ok(BkResult {
        p_disjoint,
        p_product: event_probs.iter().product(),
        event_probs,
    })
}

/// Every increasing event on `n <= 4` edges.
pub fn all_increasing_events(n: usize) -> Result<Vec<Event>> {
    if n == 0 || n > 4 {
        return Err(Error::domain("all_increasing_events enumerates n in 1..=4"));
    }
    let outcomes = 1usize << n;
    let mut out = Vec::new();
    for bits in 0u64..(1u64 << outcomes) {
        let e = Event {
            n,
            table: (0..outcomes).map(|w| bits >> w & 1 == 1).collect(),
        };
        if e.is_increasing() {
            out.push(e);
        }
    }
    Ok(out)
}

/// A random increasing event: the up-set of one to three random nonempty
/// generators.
pub fn random_increasing_event(n: usize, seed: u64) -> Result<Event> {
    check_n(n)?;
    let count = 1 + (uniform(seed, Stream::Aux, &[0]) * 3.0) as u64;
    let mut generators = Vec::new();
    let mut draw = 1u64;
    for g in 0..count {
        let mut mask = 0u32;
        while mask == 0 {
            for i in 0..n {
                if uniform(seed, Stream::Aux, &[1, g, draw, i as u64]) < 0.5 {
                    mask |= 1 << i;
                }
            }
            draw += 1;
        }
        generators.push(mask);
    }
    Event::from_generators(n, &generators)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_single_edges() {
        let a = Event::parse("open:1", 2).unwrap();
        let b = Event::parse("open:2", 2).unwrap();
        let r = bk_brute_force(2, &[0.5, 0.5], &a, &b).unwrap();
        assert_eq!(r.p_disjoint, 0.25);
        assert_eq!(r.p_product, 0.25);
    }

    #[test]
    fn same_edge_cannot_occur_twice() {
        let a = Event::parse("open:1", 1).unwrap();
        let r = bk_brute_force(1, &[0.5], &a, &a).unwrap();
        assert!(r.p_disjoint == 0.0 && r.p_disjoint.is_sign_positive());
        assert_eq!(r.p_product, 0.25);
    }

    #[test]
    fn full_space_uses_empty_witness() {
        let all = Event::always(3).unwrap();
        let b = Event::parse("open:1&2|open:3", 3).unwrap();
        let probs = [0.3, 0.6, 0.2];
        let r = bk_brute_force(3, &probs, &all, &b).unwrap();
        assert!((r.p_disjoint - b.probability(&probs)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let dec = Event::from_predicate(2, |w| w == 0).unwrap();
        let a = Event::parse("open:1", 2).unwrap();
        assert!(bk_brute_force(2, &[0.5, 0.5], &dec, &a).is_err());
        assert!(Event::parse("open:3", 2).is_err());
        assert!(Event::parse("closed:1", 2).is_err());
        assert!(Event::always(13).unwrap_err().is_budget());
        assert!(bk_brute_force(2, &[0.5], &a, &a).is_err());
    }

    #[test]
    fn dedekind_counts() {
        assert_eq!(all_increasing_events(1).unwrap().len(), 3);
        assert_eq!(all_increasing_events(2).unwrap().len(), 6);
        assert_eq!(all_increasing_events(3).unwrap().len(), 20);
    }

    #[test]
    fn k_ary_variant() {
        let e: Vec<Event> = (1..=3).map(|i| Event::parse(&format!("open:{i}"), 3).unwrap()).collect();
        let refs: Vec<&Event> = e.iter().collect();
        let r = bk_brute_force_k(3, &[0.5, 0.4, 0.3], &refs).unwrap();
        assert!((r.p_disjoint - 0.06).abs() < 1e-15);
        assert!(r.holds(1e-12));
    }

    #[test]
    fn random_events_are_increasing() {
        for s in 0..50 {
            let e = random_increasing_event(6, s).unwrap();
            assert!(e.is_increasing());
            assert!(!e.contains(0));
        }
    }
}
