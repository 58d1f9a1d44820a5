//! Sampling and distance measurement for long-range and scale-free
//! percolation, geometric inhomogeneous random graphs and complete
//! first-passage percolation on finite boxes.

pub mod couplings;
pub mod error;
pub mod estimators;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod sampler;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/distances.md")]
    mod distances {}
    #[doc = include_str!("../../../book/src/couplings.md")]
    mod couplings {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/bk.md")]
    mod bk {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
