//! Co-simulation of a spintronic Bayesian neural network accelerator.
//!
//! Device models for a stochastic MTJ random-bit cell and domain-wall MTJ
//! synapses/neurons, a central-limit Gaussian sampler built on those bits,
//! crossbar in-memory dot products with converters and programming variation,
//! Bayes-by-Backprop training, hardware-constrained inference, and per-inference
//! energy accounting.

pub mod error;
pub mod magnetodynamics;
pub mod rng;
pub mod sampling;
pub mod crossbar;
pub mod bayes;
pub mod dataset;
pub mod energy;
pub mod config;
pub mod report;
pub mod cli;

pub use error::{Error, Result};

/// Guide chapters compiled as doctests so their snippets stay in sync.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/random-bits.md")]
    mod random_bits {}
    #[doc = include_str!("../../../book/src/gaussian-sampler.md")]
    mod gaussian_sampler {}
    #[doc = include_str!("../../../book/src/domain-wall.md")]
    mod domain_wall {}
    #[doc = include_str!("../../../book/src/crossbar.md")]
    mod crossbar {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/hardware-inference.md")]
    mod hardware_inference {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
