//! Cauchy-Schwarz divergence estimators, dependence measures and an
//! information bottleneck trainer built on them.
//!
//! The crate is `no_std` with `alloc`. File formats, the command line and
//! threading live in the companion `csib` crate.

#![no_std]

extern crate alloc;

pub mod attacks;
pub mod autodiff;
pub mod conditional;
pub mod data;
pub mod dependence;
pub mod divergence;
pub mod error;
pub mod kernel;
mod linalg;
pub mod matrix;
pub mod oracle;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use kernel::{gram, pairwise_sqdist, GramMatrix, KernelSpec, SampleMatrix};
pub use matrix::Matrix;
