//! Synthetic one-dimensional spectra and reproducible CNN classification
//! benchmarks.
//!
//! * [`spectra`]: Gaussian peak rendering and sample variations.
//! * [`dataset`]: class sampling, split assembly, JSON and NPY persistence.
//! * [`nn`]: a small differentiable engine (conv, pool, batch norm, dense, Adam).
//! * [`zoo`]: architecture grammar, model construction and the training loop.
//! * [`bench`](mod@bench): multi-seed runs, the nearest-ideal oracle, and reports.
//! * [`cli`]: the `synspec` command line.

pub mod bench;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod nn;
pub mod rng;
pub mod spectra;
pub mod zoo;

pub use error::{Error, Result};
