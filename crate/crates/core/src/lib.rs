//! Slow-fast stochastic systems driven by symmetric α-stable noise:
//! simulation, stochastic averaging, Zakai filtering of the averaged slow
//! dynamics, drift parameter estimation and most probable paths.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the `*F64` aliases
//! below fix the scalar for the common case.

// `!(x > 0)` style checks are deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod error;
pub mod estimate;
pub mod grid;
pub mod linalg;
pub mod mpp;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod stable;
pub mod zakai;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SlowFastSystemF64 = simulate::SlowFastSystem<f64>;
pub type PathEnsembleF64 = simulate::PathEnsemble<f64>;
pub type InvariantMeasureF64 = averaging::InvariantMeasure<f64>;
pub type ReducedSystemF64 = averaging::ReducedSystem<f64>;
pub type Grid1F64 = grid::Grid1<f64>;
pub type GridDensityF64 = grid::GridDensity<f64>;
pub type ParticleCloudF64 = zakai::ParticleCloud<f64>;
pub type FilterRunF64 = zakai::FilterRun<f64>;
pub type EstimationProblemF64 = estimate::EstimationProblem<f64>;
pub type MostProbablePathF64 = mpp::MostProbablePath<f64>;

pub type SlowFastSystemF32 = simulate::SlowFastSystem<f32>;
pub type ReducedSystemF32 = averaging::ReducedSystem<f32>;
pub type GridDensityF32 = grid::GridDensity<f32>;
