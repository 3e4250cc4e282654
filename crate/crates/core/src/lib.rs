//! Estimation of low-rank symmetric kernels on weighted graphs from noisy
//! observations of randomly sampled entries.
//!
//! The numeric core is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases.

pub mod convex;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod packing;
pub mod rates;
pub mod restricted;
pub mod rng;
pub mod sampling;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Kernel = kernel::SymmetricKernel<f64>;
pub type Graph = graph::WeightedGraph<f64>;
pub type Spectrum = graph::SpectralDecomposition<f64>;
pub type Data = sampling::Dataset<f64>;
pub type Matrix = linalg::Mat<f64>;

pub type Kernel32 = kernel::SymmetricKernel<f32>;
pub type Graph32 = graph::WeightedGraph<f32>;
pub type Spectrum32 = graph::SpectralDecomposition<f32>;
pub type Data32 = sampling::Dataset<f32>;
pub type Matrix32 = linalg::Mat<f32>;
