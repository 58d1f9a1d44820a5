//! Stateless counter-based uniforms.
//!
//! Every random quantity in a realization is a pure function of the master
//! seed, a stream tag and an integer key, so coupled models that share a seed
//! see exactly the same uniforms regardless of evaluation order or threading.

use crate::error::{Error, Result};

/// Namespaces for the independent streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Edge = 0x45,
    Weight = 0x57,
    Position = 0x50,
    Cost = 0x43,
    Trial = 0x54,
    Aux = 0x41,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash an ordered list of words under `seed`.
#[inline]
pub fn mix(seed: u64, words: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &w in words {
        h = splitmix64(h ^ w);
    }
    h
}

/// Map 64 random bits to a double in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn to_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A fresh seed for sub-experiment `index` of a stream.
#[inline]
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    mix(seed, &[stream as u64, index])
}

/// Seed of trial `index` under a master seed.
#[inline]
pub fn trial_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, Stream::Trial, index)
}

/// Uniform in `[0, 1)` keyed by `(seed, stream, key...)`.
#[inline]
pub fn uniform(seed: u64, stream: Stream, key: &[u64]) -> f64 {
    let mut h = mix(seed, &[stream as u64]);
    for &w in key {
        h = splitmix64(h ^ w);
    }
    to_unit(h)
}

#[inline]
pub(crate) fn edge_uniform_unchecked(seed: u64, u: usize, v: usize) -> f64 {
    let (a, b) = if u < v { (u, v) } else { (v, u) };
    uniform(seed, Stream::Edge, &[a as u64, b as u64])
}

/// The shared uniform of the unordered pair `{u, v}`.
pub fn edge_uniform(seed: u64, u: usize, v: usize) -> Result<f64> {
    if u == v {
        return Err(Error::domain(format!("edge_uniform needs distinct endpoints, got {u} twice")));
    }
    Ok(edge_uniform_unchecked(seed, u, v))
}

/// Per-vertex uniform used for weights.
#[inline]
pub fn vertex_uniform(seed: u64, i: usize) -> f64 {
    uniform(seed, Stream::Weight, &[i as u64])
}

/// Per-vertex, per-coordinate uniform used for random positions.
#[inline]
pub fn position_uniform(seed: u64, i: usize, coord: usize) -> f64 {
    uniform(seed, Stream::Position, &[i as u64, coord as u64])
}

/// The seed of the cost stream attached to a graph seed.
#[inline]
pub fn cost_seed(seed: u64) -> u64 {
    derive_seed(seed, Stream::Cost, 0)
}
